#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "assg/autodiff.hpp"
#include "assg/matrix.hpp"
#include "assg/ssg.hpp"

namespace assg {

/// Temporal aggregation of per-segment class logits into video logits.
enum class Aggregation { sap, gmp, gap };

std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

struct ErasedFeatures {
  Matrix features;                               // relu(F) with erased columns zeroed
  std::vector<bool> erased;                      // per segment
  std::vector<std::vector<std::size_t>> regions; // U_c for c = 1..C at index c - 1
};

/// U_c = {t : H[c, t] > theta_a} for foreground classes; the union is erased.
std::vector<bool> erase_mask(const Heatmap& heatmap, double theta_a,
                             std::vector<std::vector<std::size_t>>* regions = nullptr);
ErasedFeatures erase(const SsgForwardCache& cache, double theta_a);

struct SapOutput {
  std::vector<double> attention;  // empty for GMP / GAP
  std::vector<double> video_logits;
  std::vector<double> video_probs;
};

/// Softmax over time of the channel sums of the erased features.
std::vector<double> sap_attention(const Matrix& erased_features);
/// Per-segment foreground logits (C x N) of the erased features.
Matrix erased_segment_logits(const SsgParams& params, const Matrix& erased_features);
SapOutput sap_aggregate(const Matrix& segment_logits, std::span<const double> attention);
SapOutput aggregate_gmp(const Matrix& segment_logits);
SapOutput aggregate_gap(const Matrix& segment_logits);
SapOutput aggregate(const SsgParams& params, const ErasedFeatures& erased, Aggregation how);

/// -sum_c y_c log p_c with y the label set normalized to sum 1.
/// Throws TrainingError for an empty label set.
double classification_loss(const SapOutput& out, std::span<const int> video_labels);

// ---- graph forms ----------------------------------------------------------

/// 1 x N attention from an (erased) feature node.
Var sap_attention(Graph& g, Var erased_features);

struct ClassifierNodes {
  Var erased;
  Var segment_logits;
  Var video_logits;
  Var loss;
};

/// Erases `positive` with the fixed mask, pools with `how`, and attaches the
/// classification loss. Reads only the foreground head (fg_weight, fg_bias).
ClassifierNodes build_classifier(Graph& g, Var positive, Var fg_weight, Var fg_bias,
                                 const std::vector<bool>& erased, Aggregation how,
                                 std::span<const int> video_labels, std::size_t num_classes);

}  // namespace assg
