#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "assg/autodiff.hpp"
#include "assg/corpus.hpp"
#include "assg/labels.hpp"
#include "assg/matrix.hpp"

namespace assg {

inline constexpr std::size_t kDefaultHidden = 512;

/// Weights of one stream's SSG network. Both temporal convolutions have
/// kernel size 1, so each is an affine map applied at every segment.
struct SsgParams {
  Matrix layer1_weight;  // H x K
  Matrix layer1_bias;    // H x 1
  Matrix layer2_weight;  // H x H
  Matrix layer2_bias;    // H x 1
  Matrix fg_weight;      // C x H, reads relu(F)
  Matrix fg_bias;        // C x 1
  Matrix bg_weight;      // 1 x H, reads relu(-F)
  Matrix bg_bias;        // 1 x 1

  static constexpr std::size_t kTensorCount = 8;
  static const std::array<const char*, kTensorCount>& tensor_names();

  std::vector<Matrix> tensors() const;
  void assign(std::vector<Matrix> tensors);

  std::size_t k_dims() const { return layer1_weight.cols(); }
  std::size_t hidden() const { return layer1_weight.rows(); }
  std::size_t num_classes() const { return fg_weight.rows(); }
  std::size_t parameter_count() const;

  friend bool operator==(const SsgParams&, const SsgParams&) = default;
};

/// Glorot-uniform weights, zero biases.
SsgParams init_ssg(std::size_t k_dims, std::size_t num_classes, std::size_t hidden,
                   std::uint64_t seed);

/// (C+1) x N per-segment class distribution; row 0 is background.
struct Heatmap {
  Matrix values;

  std::size_t num_classes() const { return values.rows() - 1; }
  std::size_t n_segments() const { return values.cols(); }
  double at(int cls, std::size_t t) const { return values(static_cast<std::size_t>(cls), t); }
};

struct SsgForwardCache {
  Matrix features;  // F, H x N, pre-activation output of layer 2
  Matrix positive;  // relu(F)
  Matrix negative;  // relu(-F)
  Matrix logits;    // (C+1) x N
  Heatmap heatmap;
};

/// Graph handles produced by build_ssg.
struct SsgNodes {
  Var input;
  Var features;
  Var positive;
  Var negative;
  Var logits;
  Var log_heatmap;
};

/// params must hold SsgParams::kTensorCount handles in tensor order.
SsgNodes build_ssg(Graph& g, std::span<const Var> params, const Matrix& input);

/// Throws DimensionError when fs.k_dims does not match the params.
SsgForwardCache ssg_forward(const SsgParams& params, const FeatureSequence& fs);
Heatmap ssg_heatmap(const SsgParams& params, const FeatureSequence& fs);

/// Per-class growing thresholds: index 0 background, 1..C foreground.
std::vector<double> growth_thresholds(std::size_t num_classes, double theta_fg, double theta_bg);

struct GrowResult {
  SeedLabelMap labels;
  std::size_t newly_labeled = 0;
};

/// One synchronous growing sweep. An unlabeled t takes class c iff t neighbours
/// a location of class c at sweep start, H[c, t] >= thresholds[c], and c is the
/// argmax of column t (ties to the smaller id). Labeled locations never change.
GrowResult grow_step(const Heatmap& heatmap, const SeedLabelMap& labels,
                     std::span<const double> thresholds);

/// Mean of -log H[c, t] over every labeled (c, t). Throws TrainingError if
/// nothing is labeled.
double seeding_loss(const Heatmap& heatmap, const SeedLabelMap& labels);
Var seeding_loss(Graph& g, Var log_heatmap, const SeedLabelMap& labels);

/// CSV `t,bg,class_1..class_C`.
void write_heatmap_csv(std::ostream& out, const Heatmap& heatmap);

}  // namespace assg
