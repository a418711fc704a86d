#include "assg/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "assg/autodiff.hpp"
#include "assg/errors.hpp"
#include "assg/rng.hpp"
#include "json.hpp"

namespace assg {

std::size_t SeedLabelMap::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(state.begin(), state.end(), [](int s) { return s != kUnlabeled; }));
}

std::vector<std::size_t> SeedLabelMap::members(int c) const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < state.size(); ++t)
    if (state[t] == c) out.push_back(t);
  return out;
}

std::vector<Matrix> CasBaselineParams::tensors() const {
  return {class_weight, class_bias, attention_weight, attention_bias};
}

void CasBaselineParams::assign(std::vector<Matrix> t) {
  if (t.size() != 4) throw DimensionError("CasBaselineParams expects 4 tensors");
  class_weight = std::move(t[0]);
  class_bias = std::move(t[1]);
  attention_weight = std::move(t[2]);
  attention_bias = std::move(t[3]);
}

CasBaselineParams init_cas_baseline(std::size_t num_classes, std::size_t k_dims, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0xCA5, 0));
  CasBaselineParams p;
  p.class_weight = glorot_uniform(num_classes, k_dims, rng);
  p.class_bias = Matrix(num_classes, 1);
  p.attention_weight = glorot_uniform(1, k_dims, rng);
  p.attention_bias = Matrix(1, 1);
  return p;
}

namespace {

Matrix label_target(std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw TrainingError("video has no labels");
  Matrix target(num_classes, 1);
  for (int c : labels) target(static_cast<std::size_t>(c - 1), 0) = 1.0 / static_cast<double>(labels.size());
  return target;
}

// Video-level cross-entropy; vars = {W, b, attention w, attention b}.
Var baseline_loss(Graph& g, std::span<const Var> vars, const Matrix& x, const Matrix& target) {
  const Var input = g.constant(x);
  const Var logits = pointwise_affine(g, vars[0], vars[1], input);
  const Var attention = softmax_rows(g, pointwise_affine(g, vars[2], vars[3], input));
  const Var video_logits = matmul(g, logits, transpose(g, attention));
  return scale(g, weighted_sum(g, log_softmax_columns(g, video_logits), target), -1.0);
}

}  // namespace

double cas_baseline_loss(const CasBaselineParams& params, const Corpus& corpus, Stream stream) {
  const auto train = corpus.split(Split::train);
  if (train.empty()) throw TrainingError("cas baseline: empty training split");
  double total = 0.0;
  for (const VideoRecord* v : train) {
    Graph g;
    std::vector<Var> vars;
    for (auto& t : params.tensors()) vars.push_back(g.constant(std::move(t)));
    total += g.value(baseline_loss(g, vars, v->stream(stream).channels(),
                                   label_target(v->labels, corpus.num_classes)))(0, 0);
  }
  return total / static_cast<double>(train.size());
}

CasBaseline train_cas_baseline(const Corpus& corpus, Stream stream, const CasBaselineConfig& cfg) {
  const auto train = corpus.split(Split::train);
  if (train.empty()) throw TrainingError("cas baseline: empty training split");

  CasBaseline out;
  out.params = init_cas_baseline(corpus.num_classes, corpus.k_dims(), cfg.seed);
  std::vector<Matrix> tensors = out.params.tensors();
  out.optimizer = make_adam(tensors, cfg.learning_rate);

  std::vector<Matrix> inputs, targets;
  for (const VideoRecord* v : train) {
    inputs.push_back(v->stream(stream).channels());
    targets.push_back(label_target(v->labels, corpus.num_classes));
  }

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5EED, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t i : order) {
      Graph g;
      std::vector<Var> vars;
      for (const auto& t : tensors) vars.push_back(g.parameter(t));
      const Var loss = baseline_loss(g, vars, inputs[i], targets[i]);
      const double value = g.value(loss)(0, 0);
      if (!std::isfinite(value)) {
        throw TrainingError("cas baseline: non-finite loss on video " + train[i]->id);
      }
      epoch_loss += value;
      g.backward(loss);
      std::vector<Matrix> grads;
      for (const Var v : vars) grads.push_back(g.grad(v));
      adam_update(tensors, grads, out.optimizer);
    }
    out.loss_history.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  out.params.assign(std::move(tensors));
  return out;
}

Matrix cas_logits(const CasBaselineParams& params, const FeatureSequence& fs) {
  return pointwise_affine(params.class_weight, params.class_bias, fs.channels());
}

CasSequence normalize_cas(const Matrix& logits) {
  CasSequence cas{Matrix(logits.rows(), logits.cols())};
  for (std::size_t c = 0; c < logits.rows(); ++c) {
    const auto row = logits.row_span(c);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    const double range = *hi - *lo;
    for (std::size_t t = 0; t < logits.cols(); ++t)
      cas.scores(c, t) = range > 0.0 ? (row[t] - *lo) / range : 0.0;
  }
  return cas;
}

CasSequence compute_cas(const CasBaselineParams& params, const FeatureSequence& fs) {
  return normalize_cas(cas_logits(params, fs));
}

std::vector<double> cas_video_probs(const CasBaselineParams& params, const FeatureSequence& fs) {
  const Matrix x = fs.channels();
  const Matrix logits = pointwise_affine(params.class_weight, params.class_bias, x);
  const Matrix attention =
      softmax_rows(pointwise_affine(params.attention_weight, params.attention_bias, x));
  const Matrix probs = softmax_columns(matmul(logits, attention.transposed()));
  return {probs.data().begin(), probs.data().end()};
}

void SeedConfig::validate() const {
  if (!(theta_seed > 0.0 && theta_seed <= 1.0)) throw ConfigError("seed: theta_seed must be in (0, 1]");
  if (!(theta_bg_saliency >= 0.0 && theta_bg_saliency <= 1.0))
    throw ConfigError("seed: theta_bg_saliency must be in [0, 1]");
  if (!(theta_bg_cas >= 0.0 && theta_bg_cas <= 1.0))
    throw ConfigError("seed: theta_bg_cas must be in [0, 1]");
}

SeedLabelMap extract_foreground_seeds(const CasSequence& cas, std::span<const int> video_labels,
                                      double theta_seed) {
  std::vector<int> classes(video_labels.begin(), video_labels.end());
  std::sort(classes.begin(), classes.end());
  SeedLabelMap seeds(cas.n_segments(), cas.num_classes());
  for (std::size_t t = 0; t < cas.n_segments(); ++t) {
    int best = kUnlabeled;
    double best_score = 0.0;
    for (int c : classes) {  // ascending, so ties keep the smaller id
      const double score = cas.at(c, t);
      if (score >= theta_seed && (best == kUnlabeled || score > best_score)) {
        best = c;
        best_score = score;
      }
    }
    seeds.state[t] = best;
  }
  return seeds;
}

std::vector<std::size_t> extract_background_seeds(std::span<const double> saliency,
                                                  const CasSequence& cas, double theta_sal,
                                                  double theta_cas, const SeedLabelMap& foreground,
                                                  std::span<const int> video_labels) {
  if (saliency.size() != cas.n_segments() || foreground.size() != cas.n_segments()) {
    throw DimensionError("extract_background_seeds: length mismatch");
  }
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < saliency.size(); ++t) {
    if (saliency[t] < theta_sal || foreground.labeled(t)) continue;
    double peak = 0.0;
    if (video_labels.empty()) {
      for (std::size_t c = 0; c < cas.num_classes(); ++c) peak = std::max(peak, cas.scores(c, t));
    } else {
      for (int c : video_labels) peak = std::max(peak, cas.at(c, t));
    }
    if (peak <= theta_cas) out.push_back(t);
  }
  return out;
}

SeedLabelMap initial_seeds(const CasSequence& cas, const VideoRecord& video, Stream stream,
                           const SeedConfig& cfg) {
  SeedLabelMap seeds = extract_foreground_seeds(cas, video.labels, cfg.theta_seed);
  const auto saliency = shot_change_signal(video.stream(stream));
  for (std::size_t t :
       extract_background_seeds(saliency, cas, cfg.theta_bg_saliency, cfg.theta_bg_cas, seeds,
                                video.labels)) {
    seeds.state[t] = kBackground;
  }
  return seeds;
}

void write_seeds(const std::filesystem::path& path, const std::string& video_id, Stream stream,
                 const SeedLabelMap& seeds) {
  nlohmann::json sets = nlohmann::json::object();
  for (int c = 0; c <= static_cast<int>(seeds.num_classes); ++c)
    sets[std::to_string(c)] = seeds.members(c);
  const nlohmann::json doc = {{"video_id", video_id}, {"stream", to_string(stream)}, {"seeds", sets}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << doc.dump() << '\n';
}

SeedLabelMap read_seeds(const std::filesystem::path& path, std::size_t n_segments,
                        std::size_t num_classes, std::string* video_id, Stream* stream) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open seed file " + path.string());
  SeedLabelMap seeds(n_segments, num_classes);
  try {
    const auto doc = nlohmann::json::parse(in);
    if (video_id) *video_id = doc.at("video_id").get<std::string>();
    if (stream) *stream = parse_stream(doc.at("stream").get<std::string>());
    for (const auto& [key, list] : doc.at("seeds").items()) {
      const int c = std::stoi(key);
      if (c < 0 || static_cast<std::size_t>(c) > num_classes)
        throw FormatError("seed class " + key + " out of range");
      for (const auto& jt : list) {
        const auto t = jt.get<std::size_t>();
        if (t >= n_segments) throw FormatError("seed index " + std::to_string(t) + " out of range");
        if (seeds.state[t] != kUnlabeled)
          throw FormatError("segment " + std::to_string(t) + " seeded twice");
        seeds.state[t] = c;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return seeds;
}

}  // namespace assg
