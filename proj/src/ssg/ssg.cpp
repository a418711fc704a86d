#include "assg/ssg.hpp"

#include <cmath>
#include <ostream>

#include "assg/errors.hpp"
#include "assg/rng.hpp"

namespace assg {

const std::array<const char*, SsgParams::kTensorCount>& SsgParams::tensor_names() {
  static const std::array<const char*, kTensorCount> names = {
      "layer1.weight", "layer1.bias", "layer2.weight", "layer2.bias",
      "fg_head.weight", "fg_head.bias", "bg_head.weight", "bg_head.bias"};
  return names;
}

std::vector<Matrix> SsgParams::tensors() const {
  return {layer1_weight, layer1_bias, layer2_weight, layer2_bias,
          fg_weight,     fg_bias,     bg_weight,     bg_bias};
}

void SsgParams::assign(std::vector<Matrix> t) {
  if (t.size() != kTensorCount) throw DimensionError("SsgParams expects 8 tensors");
  layer1_weight = std::move(t[0]);
  layer1_bias = std::move(t[1]);
  layer2_weight = std::move(t[2]);
  layer2_bias = std::move(t[3]);
  fg_weight = std::move(t[4]);
  fg_bias = std::move(t[5]);
  bg_weight = std::move(t[6]);
  bg_bias = std::move(t[7]);
}

std::size_t SsgParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

SsgParams init_ssg(std::size_t k_dims, std::size_t num_classes, std::size_t hidden,
                   std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x556, 0));
  SsgParams p;
  p.layer1_weight = glorot_uniform(hidden, k_dims, rng);
  p.layer1_bias = Matrix(hidden, 1);
  p.layer2_weight = glorot_uniform(hidden, hidden, rng);
  p.layer2_bias = Matrix(hidden, 1);
  p.fg_weight = glorot_uniform(num_classes, hidden, rng);
  p.fg_bias = Matrix(num_classes, 1);
  p.bg_weight = glorot_uniform(1, hidden, rng);
  p.bg_bias = Matrix(1, 1);
  return p;
}

SsgNodes build_ssg(Graph& g, std::span<const Var> params, const Matrix& input) {
  if (params.size() != SsgParams::kTensorCount) throw DimensionError("build_ssg: expected 8 params");
  if (input.rows() != g.value(params[0]).cols()) {
    throw DimensionError("ssg: feature dimension " + std::to_string(input.rows()) +
                         " but the network expects " + std::to_string(g.value(params[0]).cols()));
  }
  SsgNodes n;
  n.input = g.constant(input);
  const Var hidden = relu(g, pointwise_affine(g, params[0], params[1], n.input));
  n.features = pointwise_affine(g, params[2], params[3], hidden);
  n.positive = relu(g, n.features);
  n.negative = relu(g, negate(g, n.features));
  const Var fg_logits = pointwise_affine(g, params[4], params[5], n.positive);
  const Var bg_logit = pointwise_affine(g, params[6], params[7], n.negative);
  n.logits = concat_rows(g, bg_logit, fg_logits);
  n.log_heatmap = log_softmax_columns(g, n.logits);
  return n;
}

SsgForwardCache ssg_forward(const SsgParams& params, const FeatureSequence& fs) {
  Graph g;
  std::vector<Var> vars;
  for (auto& t : params.tensors()) vars.push_back(g.constant(std::move(t)));
  const SsgNodes n = build_ssg(g, vars, fs.channels());
  SsgForwardCache cache;
  cache.features = g.value(n.features);
  cache.positive = g.value(n.positive);
  cache.negative = g.value(n.negative);
  cache.logits = g.value(n.logits);
  cache.heatmap.values = softmax_columns(cache.logits);
  return cache;
}

Heatmap ssg_heatmap(const SsgParams& params, const FeatureSequence& fs) {
  return ssg_forward(params, fs).heatmap;
}

std::vector<double> growth_thresholds(std::size_t num_classes, double theta_fg, double theta_bg) {
  std::vector<double> th(num_classes + 1, theta_fg);
  th[0] = theta_bg;
  return th;
}

GrowResult grow_step(const Heatmap& heatmap, const SeedLabelMap& labels,
                     std::span<const double> thresholds) {
  const std::size_t n = heatmap.n_segments();
  const std::size_t classes = heatmap.values.rows();
  if (labels.size() != n) throw DimensionError("grow_step: label map length differs from heatmap");
  if (thresholds.size() != classes) throw DimensionError("grow_step: need one threshold per class");

  GrowResult out{labels, 0};
  for (std::size_t t = 0; t < n; ++t) {
    if (labels.labeled(t)) continue;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (heatmap.values(c, t) > heatmap.values(best, t)) best = c;
    const int cls = static_cast<int>(best);
    const bool neighbour = (t > 0 && labels.state[t - 1] == cls) ||
                           (t + 1 < n && labels.state[t + 1] == cls);
    if (neighbour && heatmap.values(best, t) >= thresholds[best]) {
      out.labels.state[t] = cls;
      ++out.newly_labeled;
    }
  }
  return out;
}

namespace {

Matrix seeding_weights(std::size_t rows, const SeedLabelMap& labels) {
  const std::size_t count = labels.labeled_count();
  if (count == 0) throw TrainingError("seeding loss needs at least one labeled location");
  Matrix w(rows, labels.size());
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (!labels.labeled(t)) continue;
    const auto c = static_cast<std::size_t>(labels.state[t]);
    if (c >= rows) throw DimensionError("seeding loss: label " + std::to_string(c) + " out of range");
    w(c, t) = -inv;
  }
  return w;
}

}  // namespace

double seeding_loss(const Heatmap& heatmap, const SeedLabelMap& labels) {
  const Matrix w = seeding_weights(heatmap.values.rows(), labels);
  double loss = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (!labels.labeled(t)) continue;
    loss += w(static_cast<std::size_t>(labels.state[t]), t) *
            std::log(heatmap.values(static_cast<std::size_t>(labels.state[t]), t));
  }
  return loss;
}

Var seeding_loss(Graph& g, Var log_heatmap, const SeedLabelMap& labels) {
  const Matrix& lh = g.value(log_heatmap);
  if (lh.cols() != labels.size()) throw DimensionError("seeding loss: label map length differs");
  return weighted_sum(g, log_heatmap, seeding_weights(lh.rows(), labels));
}

void write_heatmap_csv(std::ostream& out, const Heatmap& heatmap) {
  out << "t,bg";
  for (std::size_t c = 1; c <= heatmap.num_classes(); ++c) out << ",class_" << c;
  out << '\n';
  char buf[32];
  for (std::size_t t = 0; t < heatmap.n_segments(); ++t) {
    out << t;
    for (std::size_t c = 0; c < heatmap.values.rows(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.6f", heatmap.values(c, t));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace assg
