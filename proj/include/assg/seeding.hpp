#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "assg/adam.hpp"
#include "assg/corpus.hpp"
#include "assg/labels.hpp"
#include "assg/matrix.hpp"

namespace assg {

/// Attention-pooled linear classifier used as the CAS source.
struct CasBaselineParams {
  Matrix class_weight;      // C x K
  Matrix class_bias;        // C x 1
  Matrix attention_weight;  // 1 x K
  Matrix attention_bias;    // 1 x 1

  std::vector<Matrix> tensors() const;
  void assign(std::vector<Matrix> tensors);
  friend bool operator==(const CasBaselineParams&, const CasBaselineParams&) = default;
};

struct CasBaselineConfig {
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

struct CasBaseline {
  CasBaselineParams params;
  AdamState optimizer;
  std::vector<double> loss_history;  // mean video loss per epoch
};

CasBaselineParams init_cas_baseline(std::size_t num_classes, std::size_t k_dims, std::uint64_t seed);

/// Video-level cross-entropy training on the train split of one stream.
/// Throws TrainingError if the train split is empty.
CasBaseline train_cas_baseline(const Corpus& corpus, Stream stream, const CasBaselineConfig& cfg);

/// Mean video-level loss of `params` over the train split.
double cas_baseline_loss(const CasBaselineParams& params, const Corpus& corpus, Stream stream);

/// C x N per-segment class scores, each row min-max normalized over the video
/// (row r holds class r + 1; constant rows map to 0).
struct CasSequence {
  Matrix scores;

  std::size_t num_classes() const { return scores.rows(); }
  std::size_t n_segments() const { return scores.cols(); }
  double at(int cls, std::size_t t) const { return scores(static_cast<std::size_t>(cls - 1), t); }
};

/// Raw C x N segment logits.
Matrix cas_logits(const CasBaselineParams& params, const FeatureSequence& fs);
CasSequence compute_cas(const CasBaselineParams& params, const FeatureSequence& fs);
CasSequence normalize_cas(const Matrix& logits);
/// Softmax of the attention-pooled video logits (length C).
std::vector<double> cas_video_probs(const CasBaselineParams& params, const FeatureSequence& fs);

struct SeedConfig {
  double theta_seed = 0.90;
  double theta_bg_saliency = 0.8;
  double theta_bg_cas = 0.2;

  void validate() const;
};

/// S_c = {t : cas[c, t] >= theta_seed} for labeled classes. A location claimed
/// by several classes goes to the larger score, ties to the smaller class id.
SeedLabelMap extract_foreground_seeds(const CasSequence& cas, std::span<const int> video_labels,
                                      double theta_seed);

/// S_0 = {t : saliency[t] >= theta_sal and max_c cas[c, t] <= theta_cas}
/// minus the locations already labeled in `foreground`. When `video_labels`
/// is non-empty the maximum runs over those classes only: rows of classes
/// absent from the video are normalized noise.
std::vector<std::size_t> extract_background_seeds(std::span<const double> saliency,
                                                  const CasSequence& cas, double theta_sal,
                                                  double theta_cas, const SeedLabelMap& foreground,
                                                  std::span<const int> video_labels = {});

/// Foreground seeds from `cas`, background seeds from the stream's shot-change signal.
SeedLabelMap initial_seeds(const CasSequence& cas, const VideoRecord& video, Stream stream,
                           const SeedConfig& cfg);

// {"video_id", "stream", "seeds": {"0": [t...], "1": [...], ...}}
void write_seeds(const std::filesystem::path& path, const std::string& video_id, Stream stream,
                 const SeedLabelMap& seeds);
SeedLabelMap read_seeds(const std::filesystem::path& path, std::size_t n_segments,
                        std::size_t num_classes, std::string* video_id = nullptr,
                        Stream* stream = nullptr);

}  // namespace assg
