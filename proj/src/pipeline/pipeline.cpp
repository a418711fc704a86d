#include "assg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "assg/errors.hpp"
#include "json.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace assg {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::filesystem::path Layout::baseline(Stream s) const {
  return root / "baseline" / (std::string(to_string(s)) + ".json");
}

std::filesystem::path Layout::seeds(const std::string& id, Stream s) const {
  return seeds_dir() / (id + "." + std::string(to_string(s)) + ".json");
}

std::filesystem::path Layout::checkpoint(Stream s) const {
  return root / "train" / (std::string(to_string(s)) + ".ckpt");
}

std::filesystem::path Layout::history(Stream s) const {
  return root / "train" / (std::string(to_string(s)) + ".history.csv");
}

namespace {

constexpr Stream kStreams[] = {Stream::rgb, Stream::flow};

void note(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

void require_file(const fs::path& path, const char* stage) {
  if (!fs::exists(path))
    throw FormatError("missing " + path.string() + "; run `" + stage + "` first");
}

Corpus load_corpus(const RunConfig& cfg) {
  const fs::path manifest = cfg.manifest_path();
  if (!cfg.corpus_manifest) require_file(manifest, "gen");
  return read_corpus(manifest);
}

LabelMaps load_seeds(const RunConfig& cfg, const Corpus& corpus, Stream stream) {
  const Layout layout{cfg.output_dir};
  LabelMaps out;
  for (const VideoRecord* v : corpus.split(Split::train)) {
    const fs::path path = layout.seeds(v->id, stream);
    require_file(path, "seed");
    out.emplace(v->id, read_seeds(path, v->n_segments(), corpus.num_classes));
  }
  return out;
}

json matrix_to_json(const Matrix& m) {
  const auto d = m.data();
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::vector<double>(d.begin(), d.end())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("values").get<std::vector<double>>());
}

constexpr const char* kBaselineNames[] = {"class_weight", "class_bias", "attention_weight", "attention_bias"};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string detections_for_variant(const Corpus& corpus, const RunConfig& cfg, const HeatmapFn& fn,
                                   EvalReport& report) {
  auto dets = detect_split(corpus, cfg.eval.split, fn, cfg.detect);
  report = evaluate(dets, corpus, cfg.eval.split, cfg.eval.thresholds);
  return detections_to_json(dets);
}

}  // namespace

void keep_heap_resident() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

void save_baseline(const fs::path& path, const CasBaselineParams& params) {
  json doc = json::object();
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) doc[kBaselineNames[i]] = matrix_to_json(tensors[i]);
  write_text(path, doc.dump(1) + "\n");
}

CasBaselineParams load_baseline(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open baseline " + path.string());
  try {
    const json doc = json::parse(in);
    std::vector<Matrix> tensors;
    for (const char* name : kBaselineNames) tensors.push_back(matrix_from_json(doc.at(name)));
    CasBaselineParams params;
    params.assign(std::move(tensors));
    return params;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

LabelMaps compute_seeds(const Corpus& corpus, const CasBaselineParams& baseline, Stream stream,
                        const SeedConfig& cfg) {
  LabelMaps out;
  for (const VideoRecord* v : corpus.split(Split::train)) {
    out.emplace(v->id, initial_seeds(compute_cas(baseline, v->stream(stream)), *v, stream, cfg));
  }
  return out;
}

Matrix cas_detection_heatmap(const CasBaselineParams& params, const FeatureSequence& fs) {
  const CasSequence cas = compute_cas(params, fs);
  const auto probs = cas_video_probs(params, fs);
  const std::size_t c = cas.num_classes(), n = cas.n_segments();
  Matrix out(c + 1, n);
  for (std::size_t t = 0; t < n; ++t) {
    double peak = 0.0;
    for (std::size_t r = 0; r < c; ++r) {
      out(r + 1, t) = cas.scores(r, t) * probs[r];
      peak = std::max(peak, out(r + 1, t));
    }
    out(0, t) = 1.0 - peak;
  }
  return out;
}

std::vector<Detection> detect_split(const Corpus& corpus, Split split, const HeatmapFn& heatmap,
                                    const DetectConfig& cfg) {
  std::vector<Detection> out;
  for (const VideoRecord* v : corpus.split(split)) {
    const Matrix fused =
        fuse_heatmaps(heatmap(*v, Stream::rgb), heatmap(*v, Stream::flow), cfg.fusion_ratio);
    for (const auto& p : detect(fused, cfg)) out.push_back({v->id, p});
  }
  sort_detections(out);
  return out;
}

HeatmapFn ssg_heatmaps(const SsgParams& rgb, const SsgParams& flow) {
  return [rgb, flow](const VideoRecord& v, Stream s) {
    return ssg_heatmap(s == Stream::rgb ? rgb : flow, v.stream(s)).values;
  };
}

HeatmapFn cas_heatmaps(const CasBaselineParams& rgb, const CasBaselineParams& flow) {
  return [rgb, flow](const VideoRecord& v, Stream s) {
    return cas_detection_heatmap(s == Stream::rgb ? rgb : flow, v.stream(s));
  };
}

void cmd_gen(const RunConfig& cfg, const Logger& log) {
  const Corpus corpus = generate_corpus(cfg.gen);
  const fs::path dir = cfg.output_dir / "corpus";
  write_corpus(dir, corpus);
  note(log, "wrote " + std::to_string(corpus.videos.size()) + " videos to " + dir.string());
}

void cmd_train_baseline(const RunConfig& cfg, const Logger& log) {
  const Corpus corpus = load_corpus(cfg);
  const Layout layout{cfg.output_dir};
  for (Stream s : kStreams) {
    const CasBaseline baseline = train_cas_baseline(corpus, s, cfg.baseline_for(s));
    save_baseline(layout.baseline(s), baseline.params);
    for (const auto& v : corpus.videos) {
      const CasSequence cas = compute_cas(baseline.params, v.stream(s));
      Heatmap dump{Matrix(cas.num_classes() + 1, cas.n_segments())};
      for (std::size_t r = 0; r < cas.num_classes(); ++r)
        for (std::size_t t = 0; t < cas.n_segments(); ++t) dump.values(r + 1, t) = cas.scores(r, t);
      std::ostringstream csv;
      write_heatmap_csv(csv, dump);
      write_text(layout.cas_dir() / (v.id + "." + std::string(to_string(s)) + ".csv"), csv.str());
    }
    note(log, std::string(to_string(s)) + " baseline: final loss " +
                  format_double(baseline.loss_history.empty() ? 0.0 : baseline.loss_history.back()));
  }
}

void cmd_seed(const RunConfig& cfg, const Logger& log) {
  const Corpus corpus = load_corpus(cfg);
  const Layout layout{cfg.output_dir};
  for (Stream s : kStreams) {
    require_file(layout.baseline(s), "train-baseline");
    const LabelMaps seeds = compute_seeds(corpus, load_baseline(layout.baseline(s)), s, cfg.seed);
    fs::create_directories(layout.seeds_dir());
    std::size_t empty = 0;
    for (const auto& [id, map] : seeds) {
      write_seeds(layout.seeds(id, s), id, s, map);
      if (map.labeled_count() == 0) ++empty;
    }
    note(log, std::string(to_string(s)) + " seeds: labeled fraction " +
                  format_double(labeled_fraction(seeds)) + ", videos without seeds " +
                  std::to_string(empty));
  }
}

void cmd_train(const RunConfig& cfg, Stream stream, const Logger& log) {
  const Corpus corpus = load_corpus(cfg);
  const LabelMaps seeds = load_seeds(cfg, corpus, stream);
  const Layout layout{cfg.output_dir};
  const TrainState state = train_stream(corpus, seeds, cfg.train(stream), [&](const TrainState& st) {
    if (st.epoch % 10 == 0 || st.epoch == st.config.epochs) {
      const EpochStats& e = st.history.back();
      note(log, std::string(to_string(stream)) + " epoch " + std::to_string(st.epoch) + ": l_seed " +
                    format_double(e.seed_loss) + " l_class " + format_double(e.class_loss) +
                    " labeled " + format_double(e.labeled_fraction));
    }
  });
  fs::create_directories(layout.checkpoint(stream).parent_path());
  save_checkpoint(state, layout.checkpoint(stream));
  std::ostringstream csv;
  write_history_csv(csv, state.history);
  write_text(layout.history(stream), csv.str());
}

void cmd_detect(const RunConfig& cfg, const Logger& log) {
  const Corpus corpus = load_corpus(cfg);
  const Layout layout{cfg.output_dir};
  for (Stream s : kStreams) require_file(layout.checkpoint(s), "train");
  const auto rgb = load_checkpoint(layout.checkpoint(Stream::rgb));
  const auto flow = load_checkpoint(layout.checkpoint(Stream::flow));
  const auto dets = detect_split(corpus, cfg.eval.split, ssg_heatmaps(rgb.params, flow.params), cfg.detect);
  write_text(layout.detections(), detections_to_json(dets));
  note(log, "wrote " + std::to_string(dets.size()) + " detections to " + layout.detections().string());
}

EvalReport cmd_eval(const RunConfig& cfg, const Logger& log) {
  const Corpus corpus = load_corpus(cfg);
  const Layout layout{cfg.output_dir};
  require_file(layout.detections(), "detect");
  const EvalReport report = evaluate(read_detections(layout.detections()), corpus, cfg.eval.split,
                                     cfg.eval.thresholds);
  write_text(layout.report_json(), report_to_json(report));
  std::ostringstream csv;
  write_report_csv(csv, report);
  write_text(layout.report_csv(), csv.str());
  note(log, "ave-mAP " + format_double(report.ave_map));
  return report;
}

void cmd_plot(const RunConfig& cfg, const std::string& video_id, const Logger& log) {
  const Corpus corpus = load_corpus(cfg);
  const Layout layout{cfg.output_dir};
  const VideoRecord& video = corpus.find(video_id);
  for (Stream s : kStreams) require_file(layout.checkpoint(s), "train");
  const auto rgb = load_checkpoint(layout.checkpoint(Stream::rgb));
  const auto flow = load_checkpoint(layout.checkpoint(Stream::flow));
  const auto fn = ssg_heatmaps(rgb.params, flow.params);
  const Matrix fused = fuse_heatmaps(fn(video, Stream::rgb), fn(video, Stream::flow), cfg.detect.fusion_ratio);

  std::vector<Proposal> kept;
  if (fs::exists(layout.detections())) {
    for (const auto& d : read_detections(layout.detections()))
      if (d.video_id == video_id) kept.push_back(d.proposal);
  } else {
    kept = detect(fused, cfg.detect);
  }

  std::ostringstream csv;
  write_heatmap_csv(csv, Heatmap{fused});
  write_text(layout.plot_dir() / (video_id + ".csv"), csv.str());
  write_text(layout.plot_dir() / (video_id + ".svg"), render_plot_svg(fused, video, kept));
  note(log, "wrote " + (layout.plot_dir() / (video_id + ".svg")).string());
}

Ablation parse_ablation(std::string_view name) {
  if (name == "aggregation") return Ablation::aggregation;
  if (name == "thresholds") return Ablation::thresholds;
  if (name == "modules") return Ablation::modules;
  throw std::invalid_argument("unknown ablation '" + std::string(name) +
                              "' (expected aggregation, thresholds or modules)");
}

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::aggregation: return "aggregation";
    case Ablation::thresholds: return "thresholds";
    case Ablation::modules: return "modules";
  }
  return "?";
}

namespace {

struct Variant {
  std::string name;
  TrainConfig rgb;
  TrainConfig flow;
};

// Trains one stream of a variant, reusing a cached checkpoint whose config and
// epoch count match exactly.
SsgParams trained_params(const RunConfig& cfg, const Corpus& corpus, const LabelMaps& seeds,
                         const TrainConfig& tc, const Logger& log) {
  const Layout layout{cfg.output_dir};
  std::ostringstream key;
  key << to_string(tc.stream) << "_" << to_string(tc.aggregation) << (tc.adversarial ? "_adv" : "_ssg")
      << "_a" << format_double(tc.theta_a) << "_gf" << format_double(tc.theta_gf) << "_gb"
      << format_double(tc.theta_gb) << "_e" << tc.epochs << "_h" << tc.hidden;
  const fs::path path = layout.ablate_dir() / "runs" / (key.str() + ".ckpt");
  if (fs::exists(path)) {
    TrainState cached = load_checkpoint(path);
    if (cached.config == tc && cached.epoch == tc.epochs) {
      note(log, "reusing " + path.filename().string());
      return cached.params;
    }
  }
  note(log, "training " + path.filename().string());
  const TrainState state = train_stream(corpus, seeds, tc);
  fs::create_directories(path.parent_path());
  save_checkpoint(state, path);
  return state.params;
}

std::vector<Variant> variants_for(const RunConfig& cfg, Ablation which) {
  std::vector<Variant> out;
  auto base = [&](Stream s) {
    TrainConfig tc = cfg.train(s);
    if (which == Ablation::thresholds && cfg.ablate.sweep_epochs > 0) tc.epochs = cfg.ablate.sweep_epochs;
    return tc;
  };
  auto add = [&](std::string name, const std::function<void(TrainConfig&)>& edit) {
    Variant v{std::move(name), base(Stream::rgb), base(Stream::flow)};
    edit(v.rgb);
    edit(v.flow);
    out.push_back(std::move(v));
  };
  switch (which) {
    case Ablation::aggregation:
      for (Aggregation a : {Aggregation::gmp, Aggregation::gap, Aggregation::sap})
        add(std::string(to_string(a)), [a](TrainConfig& tc) { tc.aggregation = a; });
      break;
    case Ablation::modules:
      add("ssg", [](TrainConfig& tc) { tc.adversarial = false; });
      add("assg", [](TrainConfig&) {});
      break;
    case Ablation::thresholds:
      for (double a : cfg.ablate.theta_a_values)
        add("theta_a=" + format_double(a), [a](TrainConfig& tc) { tc.theta_a = a; });
      for (double g : cfg.ablate.theta_g_values)
        add("theta_g=" + format_double(g), [g](TrainConfig& tc) {
          tc.theta_gf = g;
          tc.theta_gb = g;
        });
      break;
  }
  return out;
}

}  // namespace

AblationTable cmd_ablate(const RunConfig& cfg, Ablation which, const Logger& log) {
  const Corpus corpus = load_corpus(cfg);
  const Layout layout{cfg.output_dir};
  std::map<Stream, LabelMaps> seeds;
  for (Stream s : kStreams) seeds[s] = load_seeds(cfg, corpus, s);

  AblationTable table{std::string(to_string(which)), {}};
  if (which == Ablation::modules) {
    for (Stream s : kStreams) require_file(layout.baseline(s), "train-baseline");
    AblationRow row{"cas_baseline", {}};
    detections_for_variant(corpus, cfg,
                           cas_heatmaps(load_baseline(layout.baseline(Stream::rgb)),
                                        load_baseline(layout.baseline(Stream::flow))),
                           row.report);
    note(log, "cas_baseline: ave-mAP " + format_double(row.report.ave_map));
    table.rows.push_back(std::move(row));
  }
  for (const Variant& v : variants_for(cfg, which)) {
    const SsgParams rgb = trained_params(cfg, corpus, seeds[Stream::rgb], v.rgb, log);
    const SsgParams flow = trained_params(cfg, corpus, seeds[Stream::flow], v.flow, log);
    AblationRow row{v.name, {}};
    detections_for_variant(corpus, cfg, ssg_heatmaps(rgb, flow), row.report);
    note(log, v.name + ": ave-mAP " + format_double(row.report.ave_map));
    table.rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  write_table_csv(csv, table);
  write_text(layout.ablate_dir() / (table.which + ".csv"), csv.str());
  write_text(layout.ablate_dir() / (table.which + ".md"), format_table(table));
  return table;
}

std::string format_table(const AblationTable& table) {
  std::ostringstream out;
  out << "| " << table.which;
  if (!table.rows.empty())
    for (double t : table.rows.front().report.thresholds) out << " | mAP@" << format_double(t).substr(0, 3);
  out << " | ave-mAP |\n|---";
  if (!table.rows.empty())
    for (std::size_t i = 0; i <= table.rows.front().report.thresholds.size(); ++i) out << "|---";
  out << "|\n";
  for (const auto& row : table.rows) {
    out << "| " << row.name;
    for (double m : row.report.map) out << " | " << format_double(100.0 * m).substr(0, 5);
    out << " | " << format_double(100.0 * row.report.ave_map).substr(0, 5) << " |\n";
  }
  return out.str();
}

void write_table_csv(std::ostream& out, const AblationTable& table) {
  out << "variant";
  if (!table.rows.empty())
    for (double t : table.rows.front().report.thresholds) out << ",map@" << format_double(t).substr(0, 4);
  out << ",ave_map\n";
  for (const auto& row : table.rows) {
    out << row.name;
    for (double m : row.report.map) out << "," << format_double(m);
    out << "," << format_double(row.report.ave_map) << "\n";
  }
}

std::string render_plot_svg(const Matrix& fused, const VideoRecord& video,
                            const std::vector<Proposal>& detections) {
  static const char* kPalette[] = {"#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
                                   "#e377c2", "#17becf", "#bcbd22"};
  constexpr double kWidth = 900, kHeight = 380, kLeft = 50, kRight = 20, kTop = 20, kPlot = 260;
  const std::size_t n = fused.cols();
  const double step = n > 1 ? (kWidth - kLeft - kRight) / static_cast<double>(n - 1) : 0.0;
  const double band = n > 0 ? (kWidth - kLeft - kRight) / static_cast<double>(n) : 0.0;
  auto x_of = [&](std::size_t t) { return kLeft + step * static_cast<double>(t); };
  auto y_of = [&](double v) { return kTop + kPlot * (1.0 - v); };
  auto color = [&](int cls) { return cls == 0 ? "#d62728" : kPalette[(cls - 1) % 8]; };

  char buf[256];
  std::ostringstream svg;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"11\">\n",
                kWidth, kHeight);
  svg << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"14\">" << video.id << "</text>\n";
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#888\"/>\n",
                kLeft, kTop, kWidth - kLeft - kRight, kPlot);
  svg << buf;

  // Ground truth shaded behind the curves.
  for (const auto& s : video.ground_truth) {
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\" opacity=\"0.12\"/>\n",
                  kLeft + band * static_cast<double>(s.start), kTop, band * static_cast<double>(s.length()),
                  kPlot, color(s.label));
    svg << buf;
  }
  for (std::size_t r = 0; r < fused.rows(); ++r) {
    svg << "<polyline fill=\"none\" stroke=\"" << color(static_cast<int>(r)) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < n; ++t) {
      std::snprintf(buf, sizeof(buf), "%s%.1f,%.1f", t ? " " : "", x_of(t), y_of(fused(r, t)));
      svg << buf;
    }
    svg << "\"/>\n";
  }

  const double gt_y = kTop + kPlot + 12, det_y = gt_y + 30;
  svg << "<text x=\"4\" y=\"" << gt_y + 10 << "\">truth</text>\n";
  svg << "<text x=\"4\" y=\"" << det_y + 10 << "\">detect</text>\n";
  for (const auto& s : video.ground_truth) {
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"14\" fill=\"%s\"/>\n",
                  kLeft + band * static_cast<double>(s.start), gt_y, band * static_cast<double>(s.length()),
                  color(s.label));
    svg << buf;
  }
  for (const auto& p : detections) {
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"14\" fill=\"%s\" "
                  "opacity=\"%.2f\"><title>class %d score %.3f</title></rect>\n",
                  kLeft + band * static_cast<double>(p.start), det_y, band * static_cast<double>(p.length()),
                  color(p.label), std::clamp(p.score, 0.15, 1.0), p.label, p.score);
    svg << buf;
  }
  double lx = kLeft;
  for (std::size_t r = 0; r < fused.rows(); ++r) {
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"10\" height=\"10\" fill=\"%s\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n",
                  lx, kHeight - 18, color(static_cast<int>(r)), lx + 14, kHeight - 9,
                  r == 0 ? "background" : ("class " + std::to_string(r)).c_str());
    svg << buf;
    lx += 90;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace assg
