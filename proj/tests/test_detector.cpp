#include <filesystem>
#include <random>

#include "assg/errors.hpp"
#include "assg/detector.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace assg;

namespace {

std::vector<Proposal> random_proposals(std::mt19937_64& rng, std::size_t n, bool coarse_scores) {
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = rng() % 40, len = 1 + rng() % 12;
    // coarse scores force plenty of ties
    const double score = coarse_scores ? static_cast<double>(rng() % 4) / 4.0
                                       : std::uniform_real_distribution<double>(0, 1)(rng);
    out.push_back({static_cast<int>(1 + rng() % 3), s, s + len - 1, score});
  }
  return out;
}

std::vector<oracle::Box> boxes(const std::vector<Proposal>& ps) {
  std::vector<oracle::Box> out;
  for (const auto& p : ps) out.push_back({p.label, p.start, p.end, p.score});
  return out;
}

Matrix random_distribution_columns(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  return softmax_columns(oracle::random_matrix(rows, cols, rng, 2.0));
}

}  // namespace

TEST_CASE("temporal iou hand cases") {
  CHECK(temporal_iou(2, 5, 4, 9) == doctest::Approx(0.25));
  CHECK(temporal_iou(3, 7, 3, 7) == 1.0);
  CHECK(temporal_iou(0, 2, 3, 5) == 0.0);
  CHECK(temporal_iou(4, 4, 4, 4) == 1.0);
  CHECK(temporal_iou(0, 9, 5, 5) == doctest::Approx(0.1));
}

TEST_CASE("temporal iou matches set counting and is symmetric") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const std::size_t as = rng() % 30, ae = as + rng() % 10, bs = rng() % 30, be = bs + rng() % 10;
    const double v = temporal_iou(as, ae, bs, be);
    CHECK(v == oracle::iou(as, ae, bs, be));
    CHECK(v == temporal_iou(bs, be, as, ae));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("fusion endpoints reproduce a single stream exactly") {
  std::mt19937_64 rng(5);
  const Matrix rgb = random_distribution_columns(4, 20, rng), flow = random_distribution_columns(4, 20, rng);
  CHECK(fuse_heatmaps(rgb, flow, 1.0) == rgb);
  CHECK(fuse_heatmaps(rgb, flow, 0.0) == flow);
  DetectConfig cfg;
  cfg.fusion_ratio = 1.0;
  CHECK(detect(fuse_heatmaps(rgb, flow, cfg.fusion_ratio), cfg) == detect(rgb, cfg));
  CHECK_THROWS_AS(fuse_heatmaps(rgb, Matrix(4, 19), 0.5), DimensionError);
}

TEST_CASE("fused columns of distributions stay distributions") {
  std::mt19937_64 rng(6);
  for (double ratio : {0.0, 0.1, 0.3, 0.5, 0.77, 1.0}) {
    const Matrix f = fuse_heatmaps(random_distribution_columns(5, 30, rng), random_distribution_columns(5, 30, rng), ratio);
    for (std::size_t t = 0; t < 30; ++t) {
      double total = 0;
      for (std::size_t c = 0; c < 5; ++c) total += f(c, t);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("proposal generation hand case") {
  const Matrix fused{{0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
                     {0.1, 0.6, 0.8, 0.6, 0.1, 0.9},
                     {0.2, 0.2, 0.2, 0.2, 0.2, 0.2}};
  DetectConfig cfg;
  cfg.thresholds = {0.5, 0.7, 0.15};
  auto ps = generate_proposals(fused, cfg);
  CHECK(ps == std::vector<Proposal>{{1, 1, 3, 0.0}, {1, 2, 2, 0.0}, {1, 5, 5, 0.0}, {2, 0, 5, 0.0}});
  cfg.min_length = 2;
  ps = generate_proposals(fused, cfg);
  CHECK(ps == std::vector<Proposal>{{1, 1, 3, 0.0}, {2, 0, 5, 0.0}});
  CHECK(score_proposal(fused, {1, 1, 3, 0.0}) == doctest::Approx((0.6 + 0.8 + 0.6) / 3));
}

TEST_CASE("background row never yields proposals") {
  Matrix fused(2, 5);
  for (std::size_t t = 0; t < 5; ++t) fused(0, t) = 1.0;
  CHECK(detect(fused, DetectConfig{}).empty());
}

TEST_CASE("nms hand case") {
  const std::vector<Proposal> in{{1, 0, 9, 0.9}, {1, 1, 9, 0.8}, {2, 0, 9, 0.7}, {1, 20, 25, 0.6}, {1, 5, 14, 0.95}};
  // 1-9 survives 5-14 (IoU 5/14) but not 0-9 (IoU 9/10)
  const auto kept = nms(in, 0.5);
  CHECK(kept == std::vector<Proposal>{{1, 5, 14, 0.95}, {1, 0, 9, 0.9}, {2, 0, 9, 0.7}, {1, 20, 25, 0.6}});
  CHECK(nms(in, 1.0).size() == 5);
}

TEST_CASE("nms matches the scanning oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const auto ps = random_proposals(rng, rng() % 51, trial % 2 == 0);
    const double thr = std::vector<double>{0.3, 0.5, 0.7, 1.0}[static_cast<std::size_t>(trial % 4)];
    CHECK(boxes(nms(ps, thr)) == oracle::nms(boxes(ps), thr));
  }
}

TEST_CASE("nms output properties") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const auto kept = nms(random_proposals(rng, 30, false), 0.4);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (i > 0) CHECK(kept[i - 1].score >= kept[i].score);
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        if (kept[i].label == kept[j].label) CHECK(temporal_iou(kept[i], kept[j]) < 0.4);
    }
    CHECK(nms(kept, 0.4) == kept);
  }
}

TEST_CASE("detections survive a json round trip exactly") {
  std::mt19937_64 rng(41);
  std::vector<Detection> dets;
  for (const auto& p : random_proposals(rng, 40, false)) dets.push_back({"v" + std::to_string(rng() % 5), p});
  sort_detections(dets);
  for (std::size_t i = 1; i < dets.size(); ++i) {
    CHECK(dets[i - 1].video_id <= dets[i].video_id);
    if (dets[i - 1].video_id == dets[i].video_id) CHECK(dets[i - 1].proposal.score >= dets[i].proposal.score);
  }
  CHECK(detections_from_json(detections_to_json(dets)) == dets);
  const auto path = std::filesystem::temp_directory_path() / "assg_test_dets.json";
  write_detections(path, dets);
  CHECK(read_detections(path) == dets);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(detections_from_json("[{\"video_id\":\"a\"}]"), FormatError);
  CHECK_THROWS_AS(detections_from_json("[{\"video_id\":\"a\",\"class\":1,\"start\":5,\"end\":2,\"score\":1}]"), FormatError);
  CHECK_THROWS_AS(detections_from_json("not json"), FormatError);
  CHECK_THROWS_AS(read_detections("/nonexistent/d.json"), FormatError);
}

TEST_CASE("detect config validation") {
  DetectConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.fusion_ratio = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.thresholds = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.nms_iou = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.min_length = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("documented detector examples") {
  DetectConfig cfg;
  cfg.thresholds = {0.5};
  const Matrix single{{0.9, 0.4, 0.3, 0.4, 0.9}, {0.1, 0.6, 0.7, 0.6, 0.1}};
  CHECK(generate_proposals(single, cfg) == std::vector<Proposal>{{1, 1, 3, 0.0}});
  cfg.thresholds = {0.95};
  CHECK(generate_proposals(single, cfg).empty());

  // plateau of 0.4 between two 0.6 peaks
  const Matrix plateau{{0.7, 0.4, 0.4, 0.6, 0.4, 0.6, 0.7},
                       {0.3, 0.6, 0.6, 0.4, 0.6, 0.4, 0.3}};
  cfg.thresholds = {0.3, 0.5};
  CHECK(generate_proposals(plateau, cfg) ==
        std::vector<Proposal>{{1, 0, 6, 0.0}, {1, 1, 2, 0.0}, {1, 4, 4, 0.0}});

  const Matrix two{{0.1, 0.3}, {0.9, 0.7}};
  CHECK(score_proposal(two, {1, 0, 1, 0.0}) == doctest::Approx(0.8));
  CHECK(score_proposal(two, {1, 1, 1, 0.0}) == 0.7);

  CHECK(temporal_iou(0, 10, 2, 12) == doctest::Approx(9.0 / 13.0));
  CHECK(nms({{1, 0, 10, 0.9}, {1, 2, 12, 0.8}, {1, 20, 30, 0.7}}, 0.5) ==
        std::vector<Proposal>{{1, 0, 10, 0.9}, {1, 20, 30, 0.7}});
  CHECK(nms({{1, 0, 10, 0.9}}, 0.5).size() == 1);
  CHECK(nms({{1, 0, 10, 0.9}, {2, 0, 10, 0.9}}, 0.5).size() == 2);
}
