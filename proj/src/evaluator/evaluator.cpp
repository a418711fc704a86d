#include "assg/evaluator.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace assg {

std::optional<double> average_precision(std::span<const ScoredInterval> predictions,
                                        std::span<const Interval> ground_truth,
                                        double iou_threshold) {
  if (ground_truth.empty()) return std::nullopt;

  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].score > predictions[b].score;
  });

  std::vector<bool> matched(ground_truth.size(), false);
  std::size_t true_positives = 0;
  double area = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const ScoredInterval& p = predictions[order[rank]];
    double best_iou = -1.0;
    std::size_t best = ground_truth.size();
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (matched[g] || ground_truth[g].video_id != p.video_id) continue;
      const double iou = temporal_iou(p.start, p.end, ground_truth[g].start, ground_truth[g].end);
      if (iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    if (best < ground_truth.size() && best_iou >= iou_threshold) {
      matched[best] = true;
      ++true_positives;
      area += static_cast<double>(true_positives) / static_cast<double>(rank + 1);
    }
  }
  return area / static_cast<double>(ground_truth.size());
}

EvalReport evaluate(const std::vector<Detection>& detections, const Corpus& corpus, Split split,
                    std::span<const double> thresholds) {
  const int num_classes = static_cast<int>(corpus.num_classes);
  std::map<int, std::vector<Interval>> gt;
  std::set<std::string> videos;
  for (const VideoRecord* v : corpus.split(split)) {
    videos.insert(v->id);
    for (const auto& s : v->ground_truth) gt[s.label].push_back({v->id, s.start, s.end});
  }

  std::map<int, std::vector<ScoredInterval>> predictions;
  for (const auto& d : detections) {
    if (!videos.contains(d.video_id)) {
      throw std::invalid_argument("detection references unknown video '" + d.video_id + "' (not in the " +
                                  std::string(to_string(split)) + " split)");
    }
    if (d.proposal.label < 1 || d.proposal.label > num_classes) {
      throw std::invalid_argument("detection for " + d.video_id + " has class " +
                                  std::to_string(d.proposal.label) + " outside 1.." +
                                  std::to_string(num_classes));
    }
    predictions[d.proposal.label].push_back(
        {d.video_id, d.proposal.start, d.proposal.end, d.proposal.score});
  }

  EvalReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  for (const auto& [c, list] : gt) report.classes.push_back(c);
  for (double threshold : thresholds) {
    std::vector<double> row;
    for (int c : report.classes) {
      const auto& preds = predictions[c];
      row.push_back(average_precision(preds, gt.at(c), threshold).value());
    }
    const double mean = row.empty() ? 0.0
                                    : std::accumulate(row.begin(), row.end(), 0.0) /
                                          static_cast<double>(row.size());
    report.ap.push_back(std::move(row));
    report.map.push_back(mean);
  }
  report.ave_map = report.map.empty() ? 0.0
                                      : std::accumulate(report.map.begin(), report.map.end(), 0.0) /
                                            static_cast<double>(report.map.size());
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json per_threshold = nlohmann::json::array();
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    nlohmann::json ap = nlohmann::json::object();
    for (std::size_t k = 0; k < report.classes.size(); ++k) ap[std::to_string(report.classes[k])] = report.ap[i][k];
    per_threshold.push_back({{"threshold", report.thresholds[i]}, {"map", report.map[i]}, {"ap", ap}});
  }
  const nlohmann::json doc = {{"thresholds", report.thresholds},
                              {"classes", report.classes},
                              {"per_threshold", per_threshold},
                              {"ave_map", report.ave_map}};
  return doc.dump(1) + "\n";
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  char buf[96];
  out << "threshold,class,ap\n";
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    for (std::size_t k = 0; k < report.classes.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.2f,%d,%.6f\n", report.thresholds[i], report.classes[k], report.ap[i][k]);
      out << buf;
    }
  }
  out << "threshold,map\n";
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.6f\n", report.thresholds[i], report.map[i]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "ave_map\n%.6f\n", report.ave_map);
  out << buf;
}

}  // namespace assg
