#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "assg/adam.hpp"
#include "assg/adv_classifier.hpp"
#include "assg/corpus.hpp"
#include "assg/labels.hpp"
#include "assg/ssg.hpp"

namespace assg {

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  double theta_gf = 0.99;  // foreground growing threshold
  double theta_gb = 0.99;  // background growing threshold
  double theta_a = 0.4;    // erasing threshold
  std::uint64_t seed = 1;
  Stream stream = Stream::rgb;
  std::size_t hidden = kDefaultHidden;
  Aggregation aggregation = Aggregation::sap;
  /// false trains the SSG branch alone (no erasing classifier step).
  bool adversarial = true;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochStats {
  double seed_loss = 0.0;
  double class_loss = 0.0;
  double labeled_fraction = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

using LabelMaps = std::map<std::string, SeedLabelMap>;

struct TrainState {
  TrainConfig config;
  std::size_t num_classes = 0;
  SsgParams params;
  AdamState optimizer;
  LabelMaps labels;  // grown supervision per training video
  std::size_t epoch = 0;
  std::vector<EpochStats> history;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// Fresh parameters and optimizer, labels copied from `seeds`. Every train
/// video must have at least one seed; throws TrainingError naming the first
/// one that does not.
TrainState init_train_state(const Corpus& corpus, const LabelMaps& seeds, const TrainConfig& cfg);

using EpochCallback = std::function<void(const TrainState&)>;

/// Runs `epochs` further epochs of the alternating loop in place.
void continue_training(TrainState& state, const Corpus& corpus, std::size_t epochs,
                       const EpochCallback& on_epoch = {});

/// init_train_state followed by cfg.epochs epochs.
TrainState train_stream(const Corpus& corpus, const LabelMaps& seeds, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

/// Fraction of labeled segments over all training videos.
double labeled_fraction(const LabelMaps& labels);

// Checkpoint: "ASSGCKPT", u32 version, u64 metadata length, metadata JSON,
// u32 section count, then per section: u32 name length, name, u32 rows,
// u32 cols, u64 payload bytes, rows*cols f64 (all little-endian).
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(std::span<const unsigned char> bytes);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

/// `epoch,l_seed,l_class,labeled_fraction`
void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history);

}  // namespace assg
