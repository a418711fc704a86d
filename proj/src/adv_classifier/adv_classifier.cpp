#include "assg/adv_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "assg/errors.hpp"

namespace assg {

std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::sap: return "sap";
    case Aggregation::gmp: return "gmp";
    case Aggregation::gap: return "gap";
  }
  return "sap";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "sap") return Aggregation::sap;
  if (name == "gmp") return Aggregation::gmp;
  if (name == "gap") return Aggregation::gap;
  throw std::invalid_argument("unknown aggregation '" + std::string(name) + "' (expected sap|gmp|gap)");
}

std::vector<bool> erase_mask(const Heatmap& heatmap, double theta_a,
                             std::vector<std::vector<std::size_t>>* regions) {
  const std::size_t n = heatmap.n_segments();
  const std::size_t classes = heatmap.num_classes();
  std::vector<bool> mask(n, false);
  if (regions) regions->assign(classes, {});
  for (std::size_t c = 1; c <= classes; ++c) {
    for (std::size_t t = 0; t < n; ++t) {
      if (heatmap.values(c, t) > theta_a) {
        mask[t] = true;
        if (regions) (*regions)[c - 1].push_back(t);
      }
    }
  }
  return mask;
}

ErasedFeatures erase(const SsgForwardCache& cache, double theta_a) {
  ErasedFeatures out;
  out.erased = erase_mask(cache.heatmap, theta_a, &out.regions);
  out.features = cache.positive;
  for (std::size_t r = 0; r < out.features.rows(); ++r)
    for (std::size_t t = 0; t < out.features.cols(); ++t)
      if (out.erased[t]) out.features(r, t) = 0.0;
  return out;
}

namespace {

SapOutput finish(std::vector<double> logits) {
  SapOutput out;
  const Matrix probs = softmax_columns(Matrix::column(logits));
  out.video_logits = std::move(logits);
  out.video_probs.assign(probs.data().begin(), probs.data().end());
  return out;
}

}  // namespace

std::vector<double> sap_attention(const Matrix& erased_features) {
  Matrix sums(1, erased_features.cols());
  for (std::size_t r = 0; r < erased_features.rows(); ++r)
    for (std::size_t t = 0; t < erased_features.cols(); ++t) sums(0, t) += erased_features(r, t);
  const Matrix a = softmax_rows(sums);
  return {a.data().begin(), a.data().end()};
}

Matrix erased_segment_logits(const SsgParams& params, const Matrix& erased_features) {
  return pointwise_affine(params.fg_weight, params.fg_bias, erased_features);
}

SapOutput sap_aggregate(const Matrix& segment_logits, std::span<const double> attention) {
  if (attention.size() != segment_logits.cols())
    throw DimensionError("sap_aggregate: attention length differs from segment count");
  std::vector<double> logits(segment_logits.rows(), 0.0);
  for (std::size_t c = 0; c < segment_logits.rows(); ++c)
    for (std::size_t t = 0; t < segment_logits.cols(); ++t)
      logits[c] += attention[t] * segment_logits(c, t);
  SapOutput out = finish(std::move(logits));
  out.attention.assign(attention.begin(), attention.end());
  return out;
}

SapOutput aggregate_gmp(const Matrix& segment_logits) {
  std::vector<double> logits(segment_logits.rows());
  for (std::size_t c = 0; c < segment_logits.rows(); ++c) {
    const auto row = segment_logits.row_span(c);
    logits[c] = *std::max_element(row.begin(), row.end());
  }
  return finish(std::move(logits));
}

SapOutput aggregate_gap(const Matrix& segment_logits) {
  std::vector<double> logits(segment_logits.rows(), 0.0);
  for (std::size_t c = 0; c < segment_logits.rows(); ++c) {
    for (double v : segment_logits.row_span(c)) logits[c] += v;
    logits[c] /= static_cast<double>(segment_logits.cols());
  }
  return finish(std::move(logits));
}

SapOutput aggregate(const SsgParams& params, const ErasedFeatures& erased, Aggregation how) {
  const Matrix logits = erased_segment_logits(params, erased.features);
  switch (how) {
    case Aggregation::gmp: return aggregate_gmp(logits);
    case Aggregation::gap: return aggregate_gap(logits);
    case Aggregation::sap: break;
  }
  return sap_aggregate(logits, sap_attention(erased.features));
}

namespace {

Matrix label_distribution(std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw TrainingError("classification loss needs at least one video label");
  Matrix target(num_classes, 1);
  for (int c : labels) {
    if (c < 1 || static_cast<std::size_t>(c) > num_classes)
      throw DimensionError("classification loss: label " + std::to_string(c) + " out of range");
    target(static_cast<std::size_t>(c - 1), 0) = 1.0 / static_cast<double>(labels.size());
  }
  return target;
}

}  // namespace

double classification_loss(const SapOutput& out, std::span<const int> video_labels) {
  const Matrix target = label_distribution(video_labels, out.video_logits.size());
  const Matrix log_probs = log_softmax_columns(Matrix::column(out.video_logits));
  double loss = 0.0;
  for (std::size_t c = 0; c < target.rows(); ++c)
    if (target(c, 0) > 0.0) loss -= target(c, 0) * log_probs(c, 0);
  return loss;
}

Var sap_attention(Graph& g, Var erased_features) {
  return softmax_rows(g, sum_rows(g, erased_features));
}

ClassifierNodes build_classifier(Graph& g, Var positive, Var fg_weight, Var fg_bias,
                                 const std::vector<bool>& erased, Aggregation how,
                                 std::span<const int> video_labels, std::size_t num_classes) {
  ClassifierNodes n;
  n.erased = mask_columns(g, positive, erased);
  n.segment_logits = pointwise_affine(g, fg_weight, fg_bias, n.erased);
  switch (how) {
    case Aggregation::sap: {
      const Var attention = sap_attention(g, n.erased);
      n.video_logits = matmul(g, n.segment_logits, transpose(g, attention));
      break;
    }
    case Aggregation::gmp: n.video_logits = max_columns(g, n.segment_logits); break;
    case Aggregation::gap: n.video_logits = mean_columns(g, n.segment_logits); break;
  }
  const Matrix target = label_distribution(video_labels, num_classes);
  n.loss = scale(g, weighted_sum(g, log_softmax_columns(g, n.video_logits), target), -1.0);
  return n;
}

}  // namespace assg
