#include "assg/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "assg/errors.hpp"
#include "assg/rng.hpp"

namespace assg {

namespace {

using json = nlohmann::json;

// Reads typed fields out of one JSON object and rejects anything unread.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name_ + "." + key + ": wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& sub(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  void allow(const char* key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(name_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

TrainConfig read_train_fields(Section& s, TrainConfig cfg, bool identity_keys) {
  s.read("epochs", cfg.epochs);
  s.read("learning_rate", cfg.learning_rate);
  s.read("theta_gf", cfg.theta_gf);
  s.read("theta_gb", cfg.theta_gb);
  s.read("theta_a", cfg.theta_a);
  s.read("hidden", cfg.hidden);
  s.read("adversarial", cfg.adversarial);
  std::string aggregation(to_string(cfg.aggregation));
  s.read("aggregation", aggregation);
  try {
    cfg.aggregation = parse_aggregation(aggregation);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (identity_keys) {
    s.read("seed", cfg.seed);
    std::string stream(to_string(cfg.stream));
    s.read("stream", stream);
    cfg.stream = parse_stream(stream);
  }
  return cfg;
}

}  // namespace

json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"learning_rate", cfg.learning_rate},
          {"theta_gf", cfg.theta_gf},
          {"theta_gb", cfg.theta_gb},
          {"theta_a", cfg.theta_a},
          {"seed", cfg.seed},
          {"stream", to_string(cfg.stream)},
          {"hidden", cfg.hidden},
          {"aggregation", to_string(cfg.aggregation)},
          {"adversarial", cfg.adversarial}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults) {
  Section s(j, "train");
  TrainConfig cfg = read_train_fields(s, defaults, true);
  s.finish();
  cfg.validate();
  return cfg;
}

CasBaselineConfig RunConfig::baseline_for(Stream s) const {
  CasBaselineConfig cfg = baseline;
  cfg.seed = derive_seed(rng_seed, 0xBA5E, s == Stream::rgb ? 0 : 1);
  return cfg;
}

std::filesystem::path RunConfig::manifest_path() const {
  return corpus_manifest ? *corpus_manifest : output_dir / "corpus" / "manifest.json";
}

void RunConfig::reseed(std::uint64_t seed) {
  rng_seed = seed;
  gen.seed = seed;
  train_rgb.seed = derive_seed(seed, 0x7EA1, 0);
  train_flow.seed = derive_seed(seed, 0x7EA1, 1);
  train_rgb.stream = Stream::rgb;
  train_flow.stream = Stream::flow;
}

json to_json(const RunConfig& cfg) {
  auto train = to_json(cfg.train_rgb);
  train.erase("seed");
  train.erase("stream");
  auto flow = to_json(cfg.train_flow);
  flow.erase("seed");
  flow.erase("stream");
  json doc = {
      {"rng_seed", cfg.rng_seed},
      {"output_dir", cfg.output_dir.string()},
      {"gen",
       {{"num_classes", cfg.gen.num_classes},
        {"n_segments", cfg.gen.n_segments},
        {"k_dims", cfg.gen.k_dims},
        {"train_videos", cfg.gen.train_videos},
        {"test_videos", cfg.gen.test_videos},
        {"min_instances", cfg.gen.min_instances},
        {"max_instances", cfg.gen.max_instances},
        {"max_labels", cfg.gen.max_labels},
        {"min_length_frac", cfg.gen.min_length_frac},
        {"max_length_frac", cfg.gen.max_length_frac},
        {"noise_sigma", cfg.gen.noise_sigma},
        {"separation", cfg.gen.separation}}},
      {"seed",
       {{"theta_seed", cfg.seed.theta_seed},
        {"theta_bg_saliency", cfg.seed.theta_bg_saliency},
        {"theta_bg_cas", cfg.seed.theta_bg_cas},
        {"baseline_epochs", cfg.baseline.epochs},
        {"baseline_learning_rate", cfg.baseline.learning_rate}}},
      {"train", train},
      {"detect",
       {{"fusion_ratio", cfg.detect.fusion_ratio},
        {"thresholds", cfg.detect.thresholds},
        {"nms_iou", cfg.detect.nms_iou},
        {"min_length", cfg.detect.min_length}}},
      {"eval", {{"thresholds", cfg.eval.thresholds}, {"split", to_string(cfg.eval.split)}}},
      {"ablate",
       {{"sweep_epochs", cfg.ablate.sweep_epochs},
        {"theta_a_values", cfg.ablate.theta_a_values},
        {"theta_g_values", cfg.ablate.theta_g_values}}}};
  if (flow != train) doc["train"]["flow"] = flow;
  if (cfg.corpus_manifest) doc["corpus_manifest"] = cfg.corpus_manifest->string();
  return doc;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  Section top(j, "config");
  top.read("rng_seed", cfg.rng_seed);
  std::string out_dir = cfg.output_dir.string();
  top.read("output_dir", out_dir);
  cfg.output_dir = (base_dir / out_dir).lexically_normal();
  if (top.has("corpus_manifest")) {
    std::string manifest;
    top.read("corpus_manifest", manifest);
    cfg.corpus_manifest = (base_dir / manifest).lexically_normal();
  } else {
    top.allow("corpus_manifest");
  }

  if (top.has("gen")) {
    Section s(top.sub("gen"), "gen");
    s.read("num_classes", cfg.gen.num_classes);
    s.read("n_segments", cfg.gen.n_segments);
    s.read("k_dims", cfg.gen.k_dims);
    s.read("train_videos", cfg.gen.train_videos);
    s.read("test_videos", cfg.gen.test_videos);
    s.read("min_instances", cfg.gen.min_instances);
    s.read("max_instances", cfg.gen.max_instances);
    s.read("max_labels", cfg.gen.max_labels);
    s.read("min_length_frac", cfg.gen.min_length_frac);
    s.read("max_length_frac", cfg.gen.max_length_frac);
    s.read("noise_sigma", cfg.gen.noise_sigma);
    s.read("separation", cfg.gen.separation);
    s.finish();
  } else {
    top.allow("gen");
  }

  if (top.has("seed")) {
    Section s(top.sub("seed"), "seed");
    s.read("theta_seed", cfg.seed.theta_seed);
    s.read("theta_bg_saliency", cfg.seed.theta_bg_saliency);
    s.read("theta_bg_cas", cfg.seed.theta_bg_cas);
    s.read("baseline_epochs", cfg.baseline.epochs);
    s.read("baseline_learning_rate", cfg.baseline.learning_rate);
    s.finish();
  } else {
    top.allow("seed");
  }

  if (top.has("train")) {
    const json& tj = top.sub("train");
    Section s(tj, "train");
    if (tj.contains("seed") || tj.contains("stream"))
      throw ConfigError("train: 'seed' and 'stream' are not configurable here; set rng_seed");
    TrainConfig common = read_train_fields(s, TrainConfig{}, false);
    cfg.train_rgb = common;
    cfg.train_flow = common;
    for (Stream st : {Stream::rgb, Stream::flow}) {
      const std::string key(to_string(st));
      if (!tj.contains(key)) {
        s.allow(key.c_str());
        continue;
      }
      Section sub(s.sub(key.c_str()), "train." + key);
      cfg.train(st) = read_train_fields(sub, common, false);
      sub.finish();
    }
    s.finish();
  } else {
    top.allow("train");
  }

  if (top.has("detect")) {
    Section s(top.sub("detect"), "detect");
    s.read("fusion_ratio", cfg.detect.fusion_ratio);
    s.read("thresholds", cfg.detect.thresholds);
    s.read("nms_iou", cfg.detect.nms_iou);
    s.read("min_length", cfg.detect.min_length);
    s.finish();
  } else {
    top.allow("detect");
  }

  if (top.has("eval")) {
    Section s(top.sub("eval"), "eval");
    s.read("thresholds", cfg.eval.thresholds);
    std::string split(to_string(cfg.eval.split));
    s.read("split", split);
    try {
      cfg.eval.split = parse_split(split);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("eval: ") + e.what());
    }
    s.finish();
  } else {
    top.allow("eval");
  }

  if (top.has("ablate")) {
    Section s(top.sub("ablate"), "ablate");
    s.read("sweep_epochs", cfg.ablate.sweep_epochs);
    s.read("theta_a_values", cfg.ablate.theta_a_values);
    s.read("theta_g_values", cfg.ablate.theta_g_values);
    s.finish();
  } else {
    top.allow("ablate");
  }
  top.finish();

  cfg.reseed(cfg.rng_seed);
  cfg.gen.validate();
  cfg.seed.validate();
  cfg.train_rgb.validate();
  cfg.train_flow.validate();
  cfg.detect.validate();
  if (cfg.eval.thresholds.empty()) throw ConfigError("eval: at least one IoU threshold is required");
  for (double t : cfg.eval.thresholds)
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("eval: IoU thresholds must be in (0, 1]");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  RunConfig cfg = run_config_from_json(doc, path.parent_path());
  if (const char* env = std::getenv("ASSG_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long seed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("ASSG_SEED must be an unsigned integer, got '" + std::string(env) + "'");
    cfg.reseed(seed);
  }
  return cfg;
}

}  // namespace assg
