#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "assg/errors.hpp"
#include "assg/pipeline.hpp"
#include "doctest.h"

using namespace assg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kConfigs = fs::path(ASSG_SOURCE_DIR) / "configs";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json smoke_json() { return json::parse(slurp(kConfigs / "smoke.json")); }

// Fresh scratch directory per test.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("assg_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig smoke_at(const fs::path& out) {
  json j = smoke_json();
  j["output_dir"] = out.string();
  return run_config_from_json(j, kConfigs);
}

void run_pipeline(const RunConfig& cfg) {
  cmd_gen(cfg);
  cmd_train_baseline(cfg);
  cmd_seed(cfg);
  cmd_train(cfg, Stream::rgb);
  cmd_train(cfg, Stream::flow);
  cmd_detect(cfg);
  cmd_eval(cfg);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ASSG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct SeedEnv {
  explicit SeedEnv(const char* value) { setenv("ASSG_SEED", value, 1); }
  ~SeedEnv() { unsetenv("ASSG_SEED"); }
};

}  // namespace

TEST_CASE("shipped desk config carries the documented defaults") {
  const RunConfig cfg = load_run_config(kConfigs / "desk.json");
  CHECK(cfg.gen.num_classes == 5);
  CHECK(cfg.gen.n_segments == 100);
  CHECK(cfg.gen.k_dims == 32);
  CHECK(cfg.gen.train_videos == 200);
  CHECK(cfg.gen.test_videos == 50);
  for (Stream s : {Stream::rgb, Stream::flow}) {
    CHECK(cfg.train(s).epochs == 100);
    CHECK(cfg.train(s).learning_rate == 1e-4);
    CHECK(cfg.train(s).theta_gf == 0.99);
    CHECK(cfg.train(s).theta_gb == 0.99);
    CHECK(cfg.train(s).theta_a == 0.4);
    CHECK(cfg.train(s).stream == s);
  }
  CHECK(cfg.train_rgb.seed != cfg.train_flow.seed);
  CHECK(cfg.detect.fusion_ratio == 0.3);
  CHECK(cfg.eval.thresholds == kDefaultIouThresholds);
}

TEST_CASE("unknown keys and bad values are rejected") {
  auto rejects = [](json j) { CHECK_THROWS_AS(run_config_from_json(j, "."), ConfigError); };
  json j = smoke_json();
  j["extra"] = 1;
  rejects(j);
  for (const char* section : {"gen", "seed", "train", "detect", "eval", "ablate"}) {
    j = smoke_json();
    j[section]["bogus"] = 1;
    rejects(j);
  }
  j = smoke_json();
  j["train"]["flow"] = {{"typo", 1}};
  rejects(j);
  j = smoke_json();
  j["train"]["seed"] = 3;
  rejects(j);
  j = smoke_json();
  j["gen"]["num_classes"] = "five";
  rejects(j);
  j = smoke_json();
  j["train"]["aggregation"] = "mean";
  rejects(j);
  j = smoke_json();
  j["eval"]["thresholds"] = json::array();
  rejects(j);
  j = smoke_json();
  j["eval"]["split"] = "dev";
  rejects(j);
  j = smoke_json();
  j["detect"]["fusion_ratio"] = 2.0;
  rejects(j);
  j = smoke_json();
  j["train"]["theta_a"] = -0.1;
  rejects(j);
  CHECK_THROWS_AS(load_run_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("per-stream overrides and json round trip") {
  json j = smoke_json();
  j["train"]["flow"] = {{"theta_a", 0.6}, {"aggregation", "gmp"}};
  const RunConfig cfg = run_config_from_json(j, kConfigs);
  CHECK(cfg.train_rgb.theta_a == 0.4);
  CHECK(cfg.train_flow.theta_a == 0.6);
  CHECK(cfg.train_flow.aggregation == Aggregation::gmp);
  CHECK(cfg.train_flow.hidden == 32);
  const RunConfig again = run_config_from_json(to_json(cfg), "/");
  CHECK(again.train_rgb == cfg.train_rgb);
  CHECK(again.train_flow == cfg.train_flow);
  CHECK(again.output_dir == cfg.output_dir);
  CHECK(to_json(again) == to_json(cfg));
  CHECK(cfg.output_dir == (kConfigs.parent_path() / "out" / "smoke").lexically_normal());
}

TEST_CASE("ASSG_SEED overrides every derived seed") {
  const RunConfig base = load_run_config(kConfigs / "smoke.json");
  {
    SeedEnv env("12345");
    const RunConfig cfg = load_run_config(kConfigs / "smoke.json");
    CHECK(cfg.rng_seed == 12345);
    CHECK(cfg.gen.seed == 12345);
    CHECK(cfg.train_rgb.seed != base.train_rgb.seed);
    CHECK(cfg.baseline_for(Stream::rgb).seed != base.baseline_for(Stream::rgb).seed);
  }
  {
    SeedEnv env("abc");
    CHECK_THROWS_AS(load_run_config(kConfigs / "smoke.json"), ConfigError);
  }
}

TEST_CASE("missing stage outputs name the stage to run") {
  const RunConfig cfg = smoke_at(scratch("missing"));
  try {
    cmd_detect(cfg);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("run `gen` first") != std::string::npos);
  }
  cmd_gen(cfg);
  try {
    cmd_seed(cfg);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("train-baseline") != std::string::npos);
  }
  CHECK_THROWS_AS(cmd_eval(cfg), FormatError);
}

TEST_CASE("pipeline is byte-for-byte reproducible") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  run_pipeline(smoke_at(a));
  run_pipeline(smoke_at(b));
  const Layout la{a}, lb{b};
  CHECK(slurp(la.detections()) == slurp(lb.detections()));
  CHECK(slurp(la.report_json()) == slurp(lb.report_json()));
  CHECK(slurp(la.report_csv()) == slurp(lb.report_csv()));
  CHECK(slurp(la.checkpoint(Stream::rgb)) == slurp(lb.checkpoint(Stream::rgb)));
  CHECK(!slurp(la.detections()).empty());

  // plot csv shares the heatmap dump header
  const RunConfig cfg = smoke_at(a);
  const std::string id = read_corpus(cfg.manifest_path()).split(Split::test).front()->id;
  cmd_plot(cfg, id);
  const std::string csv = slurp(la.plot_dir() / (id + ".csv"));
  CHECK(csv.rfind("t,bg,class_1,class_2,class_3\n", 0) == 0);
  CHECK(slurp(la.plot_dir() / (id + ".svg")).find("<svg") != std::string::npos);
  CHECK_THROWS(cmd_plot(cfg, "no_such_video"));
}

TEST_CASE("evaluating oracle detections scores one") {
  const RunConfig cfg = smoke_at(scratch("oracle"));
  cmd_gen(cfg);
  const Corpus corpus = read_corpus(cfg.manifest_path());
  std::vector<Detection> dets;
  for (const VideoRecord* v : corpus.split(Split::test))
    for (const auto& s : v->ground_truth) dets.push_back({v->id, {s.label, s.start, s.end, 1.0}});
  const Layout layout{cfg.output_dir};
  fs::create_directories(layout.detections().parent_path());
  write_detections(layout.detections(), dets);
  CHECK(cmd_eval(cfg).ave_map == 1.0);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("cli");
  json j = smoke_json();
  j["output_dir"] = (dir / "out").string();
  const fs::path good = dir / "good.json";
  std::ofstream(good) << j.dump();
  j["nope"] = true;
  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << j.dump();
  std::ofstream(dir / "broken.json") << "{ not json";

  CHECK(run_cli("gen --config " + good.string()) == 0);
  CHECK(fs::exists(dir / "out" / "corpus" / "manifest.json"));
  CHECK(run_cli("gen --config " + bad.string()) != 0);
  CHECK(run_cli("gen --config " + (dir / "broken.json").string()) != 0);
  CHECK(run_cli("gen --config " + (dir / "absent.json").string()) != 0);
  CHECK(run_cli("detect --config " + good.string()) != 0);
  CHECK(run_cli("train --stream depth --config " + good.string()) != 0);
  CHECK(run_cli("ablate --which everything --config " + good.string()) != 0);
  CHECK(run_cli("frobnicate") != 0);
}
