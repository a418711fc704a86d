#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "assg/corpus.hpp"
#include "assg/detector.hpp"

namespace assg {

struct ScoredInterval {
  std::string video_id;
  std::size_t start = 0;
  std::size_t end = 0;
  double score = 0.0;
};

struct Interval {
  std::string video_id;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Single-class AP. Predictions are ranked by score (stable on input order);
/// each takes the unmatched same-video ground truth of highest IoU (first on
/// ties) and counts as a true positive iff that IoU >= threshold. AP is the
/// sum over true-positive ranks of precision times 1 / |ground truth|.
/// Returns nullopt when there is no ground truth.
std::optional<double> average_precision(std::span<const ScoredInterval> predictions,
                                         std::span<const Interval> ground_truth,
                                         double iou_threshold);

inline const std::vector<double> kDefaultIouThresholds = {0.1, 0.2, 0.3, 0.4, 0.5};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<int> classes;              // classes with at least one ground truth
  std::vector<std::vector<double>> ap;   // [threshold][class index]
  std::vector<double> map;               // per threshold
  double ave_map = 0.0;
};

/// Scores `detections` against the ground truth of every video in `split`.
/// Throws std::invalid_argument for detections naming a video outside the
/// split or a class outside 1..C.
EvalReport evaluate(const std::vector<Detection>& detections, const Corpus& corpus, Split split,
                    std::span<const double> thresholds);

std::string report_to_json(const EvalReport& report);
/// `threshold,class,ap` rows, then `threshold,map` rows, then `ave_map`.
void write_report_csv(std::ostream& out, const EvalReport& report);

}  // namespace assg
