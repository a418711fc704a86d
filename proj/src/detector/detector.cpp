#include "assg/detector.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "assg/errors.hpp"
#include "json.hpp"

namespace assg {

void DetectConfig::validate() const {
  if (!(fusion_ratio >= 0.0 && fusion_ratio <= 1.0)) throw ConfigError("detect: fusion_ratio must be in [0, 1]");
  if (thresholds.empty()) throw ConfigError("detect: at least one detection threshold is required");
  for (double t : thresholds)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("detect: thresholds must be in (0, 1)");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ConfigError("detect: nms_iou must be in (0, 1]");
  if (min_length < 1) throw ConfigError("detect: min_length must be >= 1");
}

Matrix fuse_heatmaps(const Matrix& rgb, const Matrix& flow, double ratio) {
  require_same_shape(rgb, flow, "fuse_heatmaps");
  if (ratio == 1.0) return rgb;
  if (ratio == 0.0) return flow;
  Matrix out(rgb.rows(), rgb.cols());
  const auto a = rgb.data(), b = flow.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ratio * a[i] + (1.0 - ratio) * b[i];
  return out;
}

std::vector<Proposal> generate_proposals(const Matrix& fused, const DetectConfig& cfg) {
  std::set<std::tuple<int, std::size_t, std::size_t>> seen;
  const std::size_t n = fused.cols();
  for (std::size_t c = 1; c < fused.rows(); ++c) {
    for (double threshold : cfg.thresholds) {
      std::size_t t = 0;
      while (t < n) {
        if (fused(c, t) < threshold) {
          ++t;
          continue;
        }
        const std::size_t start = t;
        while (t + 1 < n && fused(c, t + 1) >= threshold) ++t;
        if (t - start + 1 >= cfg.min_length) seen.emplace(static_cast<int>(c), start, t);
        ++t;
      }
    }
  }
  std::vector<Proposal> out;
  out.reserve(seen.size());
  for (const auto& [c, s, e] : seen) out.push_back({c, s, e, 0.0});
  return out;
}

double score_proposal(const Matrix& fused, const Proposal& p) {
  double total = 0.0;
  for (std::size_t t = p.start; t <= p.end; ++t) total += fused(static_cast<std::size_t>(p.label), t);
  return total / static_cast<double>(p.length());
}

double temporal_iou(std::size_t a_start, std::size_t a_end, std::size_t b_start, std::size_t b_end) {
  const std::size_t lo = std::max(a_start, b_start);
  const std::size_t hi = std::min(a_end, b_end);
  if (lo > hi) return 0.0;
  const double inter = static_cast<double>(hi - lo + 1);
  const double uni = static_cast<double>((a_end - a_start + 1) + (b_end - b_start + 1)) - inter;
  return inter / uni;
}

namespace {

bool ranks_before(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  if (a.end != b.end) return a.end < b.end;
  return a.label < b.label;
}

}  // namespace

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
  std::stable_sort(proposals.begin(), proposals.end(), ranks_before);
  std::vector<Proposal> kept;
  for (const auto& p : proposals) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Proposal& k) {
      return k.label == p.label && temporal_iou(k, p) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

std::vector<Proposal> detect(const Matrix& fused, const DetectConfig& cfg) {
  auto proposals = generate_proposals(fused, cfg);
  for (auto& p : proposals) p.score = score_proposal(fused, p);
  return nms(std::move(proposals), cfg.nms_iou);
}

void sort_detections(std::vector<Detection>& detections) {
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    return ranks_before(a.proposal, b.proposal);
  });
}

std::string detections_to_json(const std::vector<Detection>& detections) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& d : detections) {
    doc.push_back({{"video_id", d.video_id},
                   {"class", d.proposal.label},
                   {"start", d.proposal.start},
                   {"end", d.proposal.end},
                   {"score", d.proposal.score}});
  }
  return doc.dump(1) + "\n";
}

std::vector<Detection> detections_from_json(const std::string& text) {
  std::vector<Detection> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) {
      Detection d;
      d.video_id = j.at("video_id").get<std::string>();
      d.proposal = {j.at("class").get<int>(), j.at("start").get<std::size_t>(),
                    j.at("end").get<std::size_t>(), j.at("score").get<double>()};
      if (d.proposal.start > d.proposal.end)
        throw FormatError("detection for " + d.video_id + " has start > end");
      out.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("detections: ") + e.what());
  }
  return out;
}

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& detections) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << detections_to_json(detections);
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open detections " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return detections_from_json(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace assg
