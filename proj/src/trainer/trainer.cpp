#include "assg/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>

#include "assg/config.hpp"
#include "assg/errors.hpp"
#include "assg/rng.hpp"
#include "json.hpp"

namespace assg {

void TrainConfig::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(theta_gf) || !in_unit(theta_gb)) throw ConfigError("train: growing thresholds must be in (0, 1]");
  if (!(theta_a > 0.0 && theta_a < 1.0)) throw ConfigError("train: theta_a must be in (0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (hidden < 1) throw ConfigError("train: hidden must be positive");
}

double labeled_fraction(const LabelMaps& labels) {
  std::size_t labeled = 0, total = 0;
  for (const auto& [id, map] : labels) {
    labeled += map.labeled_count();
    total += map.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(labeled) / static_cast<double>(total);
}

TrainState init_train_state(const Corpus& corpus, const LabelMaps& seeds, const TrainConfig& cfg) {
  cfg.validate();
  const auto train = corpus.split(Split::train);
  if (train.empty()) throw TrainingError("train: empty training split");

  TrainState state;
  state.config = cfg;
  state.num_classes = corpus.num_classes;
  for (const VideoRecord* v : train) {
    const auto it = seeds.find(v->id);
    if (it == seeds.end() || it->second.labeled_count() == 0) {
      throw TrainingError("train: video " + v->id + " has no seeds");
    }
    if (it->second.size() != v->n_segments() || it->second.num_classes != corpus.num_classes) {
      throw TrainingError("train: seed map of video " + v->id + " does not match the video");
    }
    state.labels.emplace(v->id, it->second);
  }
  state.params = init_ssg(corpus.k_dims(), corpus.num_classes, cfg.hidden, cfg.seed);
  state.optimizer = make_adam(state.params.tensors(), cfg.learning_rate);
  return state;
}

namespace {

struct StepLosses {
  double seed = 0.0;
  double cls = 0.0;
};

void check_finite(double value, const char* what, const std::string& video, std::size_t epoch) {
  if (!std::isfinite(value)) {
    throw TrainingError(std::string("train: non-finite ") + what + " on video " + video +
                        " at epoch " + std::to_string(epoch));
  }
}

StepLosses train_video(TrainState& state, std::vector<Matrix>& tensors, const VideoRecord& video,
                       const Matrix& input, std::span<const double> thresholds) {
  const TrainConfig& cfg = state.config;
  SeedLabelMap& labels = state.labels.at(video.id);
  StepLosses losses;

  // Grow on the current heatmap, then fit it to the enlarged supervision.
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : tensors) vars.push_back(g.parameter(t));
    const SsgNodes n = build_ssg(g, vars, input);
    const Heatmap heatmap{softmax_columns(g.value(n.logits))};
    labels = grow_step(heatmap, labels, thresholds).labels;
    const Var loss = seeding_loss(g, n.log_heatmap, labels);
    losses.seed = g.value(loss)(0, 0);
    check_finite(losses.seed, "seeding loss", video.id, state.epoch);
    g.backward(loss);
    std::vector<Matrix> grads;
    for (const Var v : vars) grads.push_back(g.grad(v));
    adam_update(tensors, grads, state.optimizer);
  }

  if (!cfg.adversarial) return losses;

  // Erase what the updated SSG is confident about and classify the rest.
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : tensors) vars.push_back(g.parameter(t));
    const SsgNodes n = build_ssg(g, vars, input);
    const Heatmap heatmap{softmax_columns(g.value(n.logits))};
    const auto mask = erase_mask(heatmap, cfg.theta_a);
    const ClassifierNodes c = build_classifier(g, n.positive, vars[4], vars[5], mask,
                                               cfg.aggregation, video.labels, state.num_classes);
    losses.cls = g.value(c.loss)(0, 0);
    check_finite(losses.cls, "classification loss", video.id, state.epoch);
    g.backward(c.loss);
    std::vector<Matrix> grads;
    for (const Var v : vars) grads.push_back(g.grad(v));
    adam_update(tensors, grads, state.optimizer);
  }
  return losses;
}

}  // namespace

void continue_training(TrainState& state, const Corpus& corpus, std::size_t epochs,
                       const EpochCallback& on_epoch) {
  const auto train = corpus.split(Split::train);
  std::vector<Matrix> inputs;
  for (const VideoRecord* v : train) {
    if (!state.labels.contains(v->id)) throw TrainingError("train: no label map for video " + v->id);
    inputs.push_back(v->stream(state.config.stream).channels());
  }
  const auto thresholds =
      growth_thresholds(state.num_classes, state.config.theta_gf, state.config.theta_gb);

  std::vector<Matrix> tensors = state.params.tensors();
  std::vector<std::size_t> order(train.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(state.config.seed, 0x0DE5, state.epoch));
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats stats;
    for (std::size_t i : order) {
      const StepLosses l = train_video(state, tensors, *train[i], inputs[i], thresholds);
      stats.seed_loss += l.seed;
      stats.class_loss += l.cls;
    }
    stats.seed_loss /= static_cast<double>(train.size());
    stats.class_loss /= static_cast<double>(train.size());
    stats.labeled_fraction = labeled_fraction(state.labels);
    state.history.push_back(stats);
    state.epoch += 1;
    if (on_epoch) {
      state.params.assign(tensors);
      on_epoch(state);
    }
  }
  state.params.assign(std::move(tensors));
}

TrainState train_stream(const Corpus& corpus, const LabelMaps& seeds, const TrainConfig& cfg,
                        const EpochCallback& on_epoch) {
  TrainState state = init_train_state(corpus, seeds, cfg);
  continue_training(state, corpus, cfg.epochs, on_epoch);
  return state;
}

// ---- checkpoint -------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'S', 'S', 'G', 'C', 'K', 'P', 'T'};

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void section(const std::string& name, const Matrix& m) {
    u32(static_cast<std::uint32_t>(name.size()));
    raw(name.data(), name.size());
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    u64(8 * static_cast<std::uint64_t>(m.size()));
    for (double v : m.data()) u64(std::bit_cast<std::uint64_t>(v));
  }
  std::vector<unsigned char> bytes;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> b) : bytes_(b) {}
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated at offset ") + std::to_string(pos_) +
                        " while reading " + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Matrix> section() {
    const std::string name = str(u32("section name length"), "section name");
    const std::size_t rows = u32("section rows");
    const std::size_t cols = u32("section cols");
    const std::uint64_t len = u64("section length");
    if (len != 8ull * rows * cols) {
      throw FormatError("checkpoint section " + name + " declares " + std::to_string(len) +
                        " bytes for " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) v = std::bit_cast<double>(u64("section payload"));
    return {name, std::move(m)};
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const TrainState& state) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : state.history)
    history.push_back({{"l_seed", h.seed_loss}, {"l_class", h.class_loss},
                       {"labeled_fraction", h.labeled_fraction}});
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [id, map] : state.labels) labels[id] = map.state;
  const nlohmann::json meta = {
      {"config", to_json(state.config)},
      {"num_classes", state.num_classes},
      {"epoch", state.epoch},
      {"history", history},
      {"adam",
       {{"learning_rate", state.optimizer.learning_rate},
        {"beta1", state.optimizer.beta1},
        {"beta2", state.optimizer.beta2},
        {"epsilon", state.optimizer.epsilon},
        {"step", state.optimizer.step}}},
      {"labels", labels}};
  const std::string meta_text = meta.dump();

  ByteWriter w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.u64(meta_text.size());
  w.raw(meta_text.data(), meta_text.size());
  const auto& names = SsgParams::tensor_names();
  const auto tensors = state.params.tensors();
  w.u32(static_cast<std::uint32_t>(3 * tensors.size()));
  for (std::size_t k = 0; k < tensors.size(); ++k) w.section(std::string("param.") + names[k], tensors[k]);
  for (std::size_t k = 0; k < tensors.size(); ++k)
    w.section(std::string("adam.m.") + names[k], state.optimizer.first_moment.at(k));
  for (std::size_t k = 0; k < tensors.size(); ++k)
    w.section(std::string("adam.v.") + names[k], state.optimizer.second_moment.at(k));
  return std::move(w.bytes);
}

TrainState decode_checkpoint(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  if (r.str(8, "magic") != std::string(kCheckpointMagic, 8))
    throw FormatError("checkpoint has bad magic at offset 0 (expected ASSGCKPT)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t meta_len = r.u64("metadata length");
  r.need(meta_len, "metadata");
  const std::string meta_text = r.str(meta_len, "metadata");

  TrainState state;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    state.config = train_config_from_json(meta.at("config"), TrainConfig{});
    state.num_classes = meta.at("num_classes").get<std::size_t>();
    state.epoch = meta.at("epoch").get<std::size_t>();
    for (const auto& h : meta.at("history"))
      state.history.push_back({h.at("l_seed").get<double>(), h.at("l_class").get<double>(),
                               h.at("labeled_fraction").get<double>()});
    const auto& adam = meta.at("adam");
    state.optimizer.learning_rate = adam.at("learning_rate").get<double>();
    state.optimizer.beta1 = adam.at("beta1").get<double>();
    state.optimizer.beta2 = adam.at("beta2").get<double>();
    state.optimizer.epsilon = adam.at("epsilon").get<double>();
    state.optimizer.step = adam.at("step").get<std::uint64_t>();
    for (const auto& [id, st] : meta.at("labels").items()) {
      SeedLabelMap map;
      map.num_classes = state.num_classes;
      map.state = st.get<std::vector<int>>();
      state.labels.emplace(id, std::move(map));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }

  const std::uint32_t count = r.u32("section count");
  if (count != 3 * SsgParams::kTensorCount) {
    throw FormatError("checkpoint has " + std::to_string(count) + " sections, expected " +
                      std::to_string(3 * SsgParams::kTensorCount));
  }
  const auto& names = SsgParams::tensor_names();
  std::vector<Matrix> params, m, v;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, mat] = r.section();
    const std::size_t k = i % SsgParams::kTensorCount;
    const char* prefix = i < 8 ? "param." : (i < 16 ? "adam.m." : "adam.v.");
    if (name != std::string(prefix) + names[k]) {
      throw FormatError("checkpoint section " + std::to_string(i) + " is '" + name +
                        "', expected '" + prefix + names[k] + "'");
    }
    (i < 8 ? params : (i < 16 ? m : v)).push_back(std::move(mat));
  }
  if (r.pos() != r.size()) {
    throw FormatError("checkpoint has trailing bytes at offset " + std::to_string(r.pos()));
  }
  state.params.assign(std::move(params));
  state.optimizer.first_moment = std::move(m);
  state.optimizer.second_moment = std::move(v);
  return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history) {
  out << "epoch,l_seed,l_class,labeled_fraction\n";
  char buf[128];
  for (std::size_t e = 0; e < history.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g\n", e + 1, history[e].seed_loss,
                  history[e].class_loss, history[e].labeled_fraction);
    out << buf;
  }
}

}  // namespace assg
