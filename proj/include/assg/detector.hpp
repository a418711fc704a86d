#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "assg/matrix.hpp"

namespace assg {

/// Candidate detection on inclusive segment indices [start, end].
struct Proposal {
  int label = 1;
  std::size_t start = 0;
  std::size_t end = 0;
  double score = 0.0;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct DetectConfig {
  double fusion_ratio = 0.3;  // weight of the RGB stream
  std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double nms_iou = 0.5;
  std::size_t min_length = 1;

  void validate() const;
};

/// fused = ratio * rgb + (1 - ratio) * flow.
Matrix fuse_heatmaps(const Matrix& rgb, const Matrix& flow, double ratio);

/// Maximal runs of fused[c, t] >= threshold for every foreground row c >= 1
/// and every threshold, at least min_length long, duplicates removed.
/// Scores are left at 0. Sorted by (class, start, end).
std::vector<Proposal> generate_proposals(const Matrix& fused, const DetectConfig& cfg);

/// Mean of fused[class, t] over the interval.
double score_proposal(const Matrix& fused, const Proposal& p);

/// Inclusive segment-count IoU.
double temporal_iou(std::size_t a_start, std::size_t a_end, std::size_t b_start, std::size_t b_end);
inline double temporal_iou(const Proposal& a, const Proposal& b) {
  return temporal_iou(a.start, a.end, b.start, b.end);
}

/// Greedy per-class suppression: score descending (ties: earlier start, then
/// smaller end); keep p iff IoU(p, kept) < iou_threshold for every kept p of
/// its class. Output sorted by score descending with the same tie order.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold);

/// generate -> score -> nms on a fused (C+1) x N map.
std::vector<Proposal> detect(const Matrix& fused, const DetectConfig& cfg);

struct Detection {
  std::string video_id;
  Proposal proposal;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Orders by video id, then score descending.
void sort_detections(std::vector<Detection>& detections);

// [{"video_id","class","start","end","score"}, ...]
std::string detections_to_json(const std::vector<Detection>& detections);
std::vector<Detection> detections_from_json(const std::string& text);
void write_detections(const std::filesystem::path& path, const std::vector<Detection>& detections);
std::vector<Detection> read_detections(const std::filesystem::path& path);

}  // namespace assg
