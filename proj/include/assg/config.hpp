#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "assg/corpus.hpp"
#include "assg/detector.hpp"
#include "assg/evaluator.hpp"
#include "assg/seeding.hpp"
#include "assg/trainer.hpp"
#include "json.hpp"

namespace assg {

struct EvalConfig {
  std::vector<double> thresholds = kDefaultIouThresholds;
  Split split = Split::test;
};

struct AblateConfig {
  /// Epoch budget of every sweep run; 0 keeps the train section's budget.
  std::size_t sweep_epochs = 0;
  std::vector<double> theta_a_values = {0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<double> theta_g_values = {0.8, 0.85, 0.9, 0.95, 0.99};
};

/// One JSON document driving every CLI verb. Seeds of all stages derive from
/// rng_seed; ASSG_SEED overrides it when the config is loaded from disk.
struct RunConfig {
  std::uint64_t rng_seed = 20190612;
  std::filesystem::path output_dir = "out";
  /// External corpus to use instead of <output_dir>/corpus/manifest.json.
  std::optional<std::filesystem::path> corpus_manifest;
  GenConfig gen;
  CasBaselineConfig baseline;
  SeedConfig seed;
  TrainConfig train_rgb;
  TrainConfig train_flow;
  DetectConfig detect;
  EvalConfig eval;
  AblateConfig ablate;

  const TrainConfig& train(Stream s) const { return s == Stream::rgb ? train_rgb : train_flow; }
  TrainConfig& train(Stream s) { return s == Stream::rgb ? train_rgb : train_flow; }
  CasBaselineConfig baseline_for(Stream s) const;
  std::filesystem::path manifest_path() const;
  /// Re-derives every stage seed from rng_seed.
  void reseed(std::uint64_t seed);
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Keys absent from `j` keep the value in `defaults`; unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults);

nlohmann::json to_json(const RunConfig& cfg);
/// Relative paths resolve against base_dir. Throws ConfigError on unknown
/// keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
/// Reads the file, applies ASSG_SEED if set, validates.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace assg
