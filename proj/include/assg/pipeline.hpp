#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "assg/config.hpp"
#include "assg/corpus.hpp"
#include "assg/detector.hpp"
#include "assg/evaluator.hpp"
#include "assg/seeding.hpp"
#include "assg/trainer.hpp"

namespace assg {

// Artifact layout under RunConfig::output_dir.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path baseline(Stream s) const;
  std::filesystem::path cas_dir() const { return root / "baseline" / "cas"; }
  std::filesystem::path seeds_dir() const { return root / "seeds"; }
  std::filesystem::path seeds(const std::string& id, Stream s) const;
  std::filesystem::path checkpoint(Stream s) const;
  std::filesystem::path history(Stream s) const;
  std::filesystem::path detections() const { return root / "detect" / "detections.json"; }
  std::filesystem::path report_json() const { return root / "eval" / "report.json"; }
  std::filesystem::path report_csv() const { return root / "eval" / "report.csv"; }
  std::filesystem::path plot_dir() const { return root / "plot"; }
  std::filesystem::path ablate_dir() const { return root / "ablate"; }
};

using Logger = std::function<void(const std::string&)>;

/// Keeps freed heap memory in the process. Training allocates and frees
/// same-sized buffers per step; returning them to the kernel each time costs
/// page faults. Call once at program start (no-op outside glibc).
void keep_heap_resident();

// Baseline parameter files are JSON objects of named matrices.
void save_baseline(const std::filesystem::path& path, const CasBaselineParams& params);
CasBaselineParams load_baseline(const std::filesystem::path& path);

/// Seeds for every train video of one stream.
LabelMaps compute_seeds(const Corpus& corpus, const CasBaselineParams& baseline, Stream stream,
                        const SeedConfig& cfg);

/// (C+1) x N detection heatmap of the baseline: normalized CAS rows scaled by
/// the video-level class probability; row 0 is one minus the column maximum.
Matrix cas_detection_heatmap(const CasBaselineParams& params, const FeatureSequence& fs);

/// Per-video heatmap source for one stream.
using HeatmapFn = std::function<Matrix(const VideoRecord&, Stream)>;

std::vector<Detection> detect_split(const Corpus& corpus, Split split, const HeatmapFn& heatmap,
                                    const DetectConfig& cfg);

HeatmapFn ssg_heatmaps(const SsgParams& rgb, const SsgParams& flow);
HeatmapFn cas_heatmaps(const CasBaselineParams& rgb, const CasBaselineParams& flow);

// CLI verbs. Each reads its inputs from disk and writes its outputs under the
// layout root; `log` receives one-line progress notes.
void cmd_gen(const RunConfig& cfg, const Logger& log = {});
void cmd_train_baseline(const RunConfig& cfg, const Logger& log = {});
void cmd_seed(const RunConfig& cfg, const Logger& log = {});
void cmd_train(const RunConfig& cfg, Stream stream, const Logger& log = {});
void cmd_detect(const RunConfig& cfg, const Logger& log = {});
EvalReport cmd_eval(const RunConfig& cfg, const Logger& log = {});
void cmd_plot(const RunConfig& cfg, const std::string& video_id, const Logger& log = {});

struct AblationRow {
  std::string name;
  EvalReport report;
};

struct AblationTable {
  std::string which;
  std::vector<AblationRow> rows;
};

enum class Ablation { aggregation, thresholds, modules };
Ablation parse_ablation(std::string_view name);
std::string_view to_string(Ablation a);

/// Trains (or reuses a cached run of) every variant, detects on the eval split
/// and writes <ablate>/<which>.csv and .md.
AblationTable cmd_ablate(const RunConfig& cfg, Ablation which, const Logger& log = {});

/// Markdown table: one row per variant, one column per IoU threshold plus ave-mAP.
std::string format_table(const AblationTable& table);
void write_table_csv(std::ostream& out, const AblationTable& table);

/// Fused-heatmap plot as SVG: background and class curves, ground truth bands,
/// detected intervals.
std::string render_plot_svg(const Matrix& fused, const VideoRecord& video,
                            const std::vector<Proposal>& detections);

}  // namespace assg
