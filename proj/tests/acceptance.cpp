// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "assg/pipeline.hpp"
#include "gradient_cases.hpp"
#include "oracles.hpp"

using namespace assg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

Matrix random_columns(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale) {
  return softmax_columns(oracle::random_matrix(rows, cols, rng, scale));
}

// ---- 1 -------------------------------------------------------------------

Outcome gradients() {
  std::mt19937_64 rng(1001);
  auto cases = gradcheck::op_cases();
  for (auto& c : gradcheck::loss_cases()) cases.push_back(std::move(c));
  constexpr int kInstances = 25;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    for (int i = 0; i < kInstances; ++i) {
      const auto params = c.make(rng);
      const std::uint64_t data_seed = rng();
      const GraphFn f = [&](Graph& g, std::span<const Var> p) {
        std::mt19937_64 r(data_seed);
        return c.build(g, p, r);
      };
      const double err = oracle::gradient_error(f, params);
      if (!(err <= worst)) {
        worst = err;
        worst_name = c.name;
      }
    }
  }
  return {worst < 1e-4, std::to_string(cases.size()) + " ops/losses x " + std::to_string(kInstances) +
                            " instances, worst relative error " + fmt("%.2e", worst) + " (" + worst_name +
                            ", bound 1e-4)"};
}

// ---- 2 -------------------------------------------------------------------

Outcome normalization() {
  std::mt19937_64 rng(2002);
  double worst = 0.0;
  auto track = [&](std::span<const double> v) {
    double total = 0;
    for (double x : v) total += x;
    worst = std::max(worst, std::abs(total - 1.0));
  };
  std::size_t erased_cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 5, c = 1 + trial % 4, h = 4 + trial % 13, n = 1 + trial % 40;
    SsgParams p = init_ssg(k, c, h, rng());
    auto t = p.tensors();
    const double spread = trial % 3 == 0 ? 8.0 : 1.0;  // some saturated softmaxes
    for (auto& m : t) m = oracle::random_matrix(m.rows(), m.cols(), rng, spread);
    p.assign(t);
    std::vector<double> v(n * k);
    std::normal_distribution<double> nd;
    for (double& x : v) x = nd(rng);
    const SsgForwardCache cache = ssg_forward(p, FeatureSequence(n, k, v));
    for (std::size_t col = 0; col < n; ++col) {
      double total = 0;
      for (std::size_t r = 0; r <= c; ++r) total += cache.heatmap.values(r, col);
      worst = std::max(worst, std::abs(total - 1.0));
    }
    // theta_a = 0 erases every segment
    for (double theta : {0.0, 0.4, 0.9}) {
      const ErasedFeatures e = erase(cache, theta);
      if (std::all_of(e.erased.begin(), e.erased.end(), [](bool b) { return b; })) ++erased_cases;
      track(sap_attention(e.features));
      for (Aggregation how : {Aggregation::sap, Aggregation::gmp, Aggregation::gap})
        track(aggregate(p, e, how).video_probs);
    }
  }
  return {worst <= 1e-9 && erased_cases >= 200,
          "heatmap columns, SAP attention and video_probs over 200 instances (" +
              std::to_string(erased_cases) + " fully erased), worst |sum - 1| " + fmt("%.2e", worst) +
              " (bound 1e-9)"};
}

// ---- 3 -------------------------------------------------------------------

std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row_span(r).begin(), m.row_span(r).end());
  return out;
}

Outcome growing() {
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t mismatches = 0, shrinks = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 1 + rng() % 4, n = 1 + rng() % 32;
    SeedLabelMap labels(n, c);
    for (auto& s : labels.state) s = u(rng) < 0.25 ? static_cast<int>(rng() % (c + 1)) : kUnlabeled;
    std::vector<double> theta(c + 1);
    for (double& v : theta) v = u(rng);
    const double scale = 0.5 + 3 * u(rng);
    const Heatmap h{random_columns(c + 1, n, rng, scale)};
    const GrowResult r = grow_step(h, labels, theta);
    if (r.labels.state != oracle::grow(rows_of(h.values), labels.state, theta)) ++mismatches;

    // 50 further sweeps on changing heatmaps, as during training
    SeedLabelMap cur = r.labels;
    for (int sweep = 0; sweep < 50; ++sweep) {
      const Heatmap hs{random_columns(c + 1, n, rng, scale)};
      const SeedLabelMap next = grow_step(hs, cur, theta).labels;
      for (std::size_t t = 0; t < n; ++t)
        if (cur.labeled(t) && next.state[t] != cur.state[t]) ++shrinks;
      cur = next;
    }
  }
  return {mismatches == 0 && shrinks == 0,
          "200 instances (N <= 32, C <= 4): " + std::to_string(mismatches) +
              " oracle mismatches; 50 sweeps each: " + std::to_string(shrinks) + " labels lost or changed"};
}

// ---- 4 -------------------------------------------------------------------

Outcome nms_oracle() {
  std::mt19937_64 rng(4004);
  std::size_t mismatches = 0, total_kept = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = rng() % 51;
    std::vector<Proposal> ps;
    std::vector<oracle::Box> boxes;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = rng() % 60, len = 1 + rng() % 15;
      const double score = trial % 2 ? static_cast<double>(rng() % 5) / 5.0
                                     : std::uniform_real_distribution<double>(0, 1)(rng);
      const int label = static_cast<int>(1 + rng() % 4);
      ps.push_back({label, s, s + len - 1, score});
      boxes.push_back({label, s, s + len - 1, score});
    }
    const double thr = 0.1 + 0.9 * static_cast<double>(rng() % 10) / 9.0;
    const auto kept = nms(ps, thr);
    const auto want = oracle::nms(boxes, thr);
    total_kept += kept.size();
    bool same = kept.size() == want.size();
    for (std::size_t i = 0; same && i < kept.size(); ++i)
      same = kept[i].label == want[i].label && kept[i].start == want[i].start &&
             kept[i].end == want[i].end && kept[i].score == want[i].score;
    if (!same) ++mismatches;
  }
  return {mismatches == 0, "500 proposal sets (n <= 50, 4 classes, half with tied scores): " +
                               std::to_string(mismatches) + " mismatches, " + std::to_string(total_kept) +
                               " proposals kept"};
}

// ---- 5 -------------------------------------------------------------------

Outcome metrics(const Corpus& desk) {
  std::vector<std::string> failures;
  if (temporal_iou(2, 5, 4, 9) != 0.25) failures.push_back("[2,5]/[4,9]");
  if (temporal_iou(3, 8, 3, 8) != 1.0) failures.push_back("identity");
  if (temporal_iou(0, 3, 4, 9) != 0.0) failures.push_back("disjoint");

  std::mt19937_64 rng(5005);
  std::size_t ap_mismatch = 0, map_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    // AP on <= 10 predictions, <= 4 truths over two videos
    std::vector<ScoredInterval> preds;
    std::vector<Interval> gts;
    std::vector<oracle::Pred> op;
    std::vector<oracle::Truth> ot;
    const std::size_t ng = 1 + rng() % 4, np = rng() % 11;
    for (std::size_t i = 0; i < ng; ++i) {
      const std::string v = rng() % 2 ? "a" : "b";
      const std::size_t s = rng() % 20, e = s + rng() % 8;
      gts.push_back({v, s, e});
      ot.push_back({v, s, e});
    }
    for (std::size_t i = 0; i < np; ++i) {
      const std::string v = rng() % 2 ? "a" : "b";
      const std::size_t s = rng() % 20, e = s + rng() % 8;
      const double score = static_cast<double>(rng() % 6) / 6.0;
      preds.push_back({v, s, e, score});
      op.push_back({v, s, e, score});
    }
    const double thr = std::vector<double>{0.1, 0.3, 0.5, 0.7}[rng() % 4];
    if (*average_precision(preds, gts, thr) != oracle::average_precision(op, ot, thr)) ++ap_mismatch;

    // mAP through evaluate on a two-video, three-class corpus
    Corpus c;
    c.num_classes = 3;
    for (const char* id : {"a", "b"}) {
      VideoRecord v;
      v.id = id;
      v.split = Split::test;
      v.rgb = FeatureSequence(40, 1, std::vector<double>(40, 0.0));
      v.flow = v.rgb;
      c.videos.push_back(std::move(v));
    }
    std::vector<Detection> dets;
    for (int i = 0; i < 4; ++i) {
      auto& v = c.videos[rng() % 2];
      const std::size_t s = rng() % 30;
      v.ground_truth.push_back({static_cast<int>(1 + rng() % 3), s, s + rng() % 8});
    }
    for (int i = 0; i < 8; ++i) {
      const std::size_t s = rng() % 30;
      dets.push_back({rng() % 2 ? "a" : "b", {static_cast<int>(1 + rng() % 3), s, s + rng() % 8,
                                              static_cast<double>(rng() % 4) / 4.0}});
    }
    const EvalReport r = evaluate(dets, c, Split::test, std::vector<double>{thr});
    double sum = 0;
    std::size_t counted = 0;
    for (int cls = 1; cls <= 3; ++cls) {
      std::vector<oracle::Pred> cp;
      std::vector<oracle::Truth> ct;
      for (const auto& d : dets)
        if (d.proposal.label == cls) cp.push_back({d.video_id, d.proposal.start, d.proposal.end, d.proposal.score});
      for (const auto& v : c.videos)
        for (const auto& g : v.ground_truth)
          if (g.label == cls) ct.push_back({v.id, g.start, g.end});
      const double ap = oracle::average_precision(cp, ct, thr);
      if (ap >= 0) {
        sum += ap;
        ++counted;
      }
    }
    const double want = counted ? sum / static_cast<double>(counted) : 0.0;
    if (r.map.front() != want) ++map_mismatch;
  }

  std::vector<Detection> perfect;
  for (const VideoRecord* v : desk.split(Split::test))
    for (const auto& s : v->ground_truth) perfect.push_back({v->id, {s.label, s.start, s.end, 1.0}});
  const double oracle_map = evaluate(perfect, desk, Split::test, kDefaultIouThresholds).ave_map;

  std::string hand = failures.empty() ? "IoU hand cases ok" : "IoU hand cases failed:";
  for (const auto& f : failures) hand += " " + f;
  return {failures.empty() && ap_mismatch == 0 && map_mismatch == 0 && oracle_map == 1.0,
          hand + "; 200 instances: " + std::to_string(ap_mismatch) + " AP and " +
              std::to_string(map_mismatch) + " mAP mismatches; oracle detections ave-mAP " +
              fmt("%.6f", oracle_map)};
}

// ---- 6, 7, 10 --------------------------------------------------------------

double row_map(const AblationTable& t, const std::string& name) {
  for (const auto& r : t.rows)
    if (r.name == name) return r.report.ave_map;
  throw std::runtime_error("ablation table " + t.which + " has no row " + name);
}

Outcome modules(const AblationTable& t) {
  const double cas = 100 * row_map(t, "cas_baseline"), ssg = 100 * row_map(t, "ssg"),
               assg = 100 * row_map(t, "assg");
  return {assg >= ssg && ssg >= cas && assg - cas >= 5.0,
          "ave-mAP(0.1:0.5) CAS " + fmt("%.2f", cas) + ", SSG " + fmt("%.2f", ssg) + ", ASSG " +
              fmt("%.2f", assg) + "; need ASSG >= SSG >= CAS and ASSG - CAS >= 5 (got " +
              fmt("%+.2f", assg - cas) + ")"};
}

Outcome aggregation(const AblationTable& t) {
  const double gmp = 100 * row_map(t, "gmp"), gap = 100 * row_map(t, "gap"), sap = 100 * row_map(t, "sap");
  return {sap >= gmp && sap >= gap, "ave-mAP GMP " + fmt("%.2f", gmp) + ", GAP " + fmt("%.2f", gap) +
                                        ", SAP " + fmt("%.2f", sap) + "; need SAP >= GMP and SAP >= GAP"};
}

Outcome thresholds(const RunConfig& cfg, const AblationTable& t) {
  const std::size_t want = cfg.ablate.theta_a_values.size() + cfg.ablate.theta_g_values.size();
  bool finite = true;
  std::string best;
  double best_map = -1;
  for (const auto& r : t.rows) {
    finite = finite && std::isfinite(r.report.ave_map) && r.report.ave_map >= 0 && r.report.ave_map <= 1;
    if (r.name.rfind("theta_a", 0) == 0 && r.report.ave_map > best_map) {
      best_map = r.report.ave_map;
      best = r.name;
    }
  }
  return {t.rows.size() == want && finite,
          std::to_string(t.rows.size()) + "/" + std::to_string(want) + " variants scored at " +
              std::to_string(cfg.ablate.sweep_epochs) + " epochs; best " + best + " (" +
              fmt("%.2f", 100 * best_map) + ")"};
}

// ---- 8 -------------------------------------------------------------------

Outcome fusion_endpoints(const RunConfig& smoke) {
  const Corpus corpus = read_corpus(smoke.manifest_path());
  const Layout layout{smoke.output_dir};
  const auto rgb = load_checkpoint(layout.checkpoint(Stream::rgb)).params;
  const auto flow = load_checkpoint(layout.checkpoint(Stream::flow)).params;
  const HeatmapFn both = ssg_heatmaps(rgb, flow);
  std::size_t videos = 0, differing = 0, dets = 0;
  for (double ratio : {1.0, 0.0}) {
    DetectConfig cfg = smoke.detect;
    cfg.fusion_ratio = ratio;
    const Stream only = ratio == 1.0 ? Stream::rgb : Stream::flow;
    const auto fused = detect_split(corpus, smoke.eval.split, both, cfg);
    std::vector<Detection> single;
    for (const VideoRecord* v : corpus.split(smoke.eval.split))
      for (const auto& p : detect(both(*v, only), cfg)) single.push_back({v->id, p});
    sort_detections(single);
    videos += corpus.split(smoke.eval.split).size();
    dets += fused.size();
    if (fused != single || detections_to_json(fused) != detections_to_json(single)) ++differing;
  }
  std::mt19937_64 rng(8008);
  std::size_t random_diff = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = random_columns(4, 50, rng, 3.0), b = random_columns(4, 50, rng, 3.0);
    if (!(fuse_heatmaps(a, b, 1.0) == a) || !(fuse_heatmaps(a, b, 0.0) == b)) ++random_diff;
  }
  return {differing == 0 && random_diff == 0 && dets > 0,
          "lambda=1 vs RGB-only and lambda=0 vs flow-only over " + std::to_string(videos) + " videos (" +
              std::to_string(dets) + " detections): " + std::to_string(differing) +
              " differing; 100 random heatmap pairs: " + std::to_string(random_diff) + " differing"};
}

// ---- 9 -------------------------------------------------------------------

void run_pipeline(const RunConfig& cfg) {
  cmd_gen(cfg);
  cmd_train_baseline(cfg);
  cmd_seed(cfg);
  cmd_train(cfg, Stream::rgb);
  cmd_train(cfg, Stream::flow);
  cmd_detect(cfg);
  cmd_eval(cfg);
}

Outcome determinism(const RunConfig& first, const RunConfig& second) {
  const Layout a{first.output_dir}, b{second.output_dir};
  std::vector<std::string> differ;
  const std::vector<std::pair<std::string, fs::path (*)(const Layout&)>> files = {
      {"detections", [](const Layout& l) { return l.detections(); }},
      {"report.json", [](const Layout& l) { return l.report_json(); }},
      {"report.csv", [](const Layout& l) { return l.report_csv(); }},
      {"rgb checkpoint", [](const Layout& l) { return l.checkpoint(Stream::rgb); }},
      {"flow checkpoint", [](const Layout& l) { return l.checkpoint(Stream::flow); }},
  };
  for (const auto& [name, get] : files) {
    const std::string x = slurp(get(a)), y = slurp(get(b));
    if (x.empty() || x != y) differ.push_back(name);
  }

  // resume: train half, persist, reload, finish; compare with one straight run
  const Corpus corpus = read_corpus(first.manifest_path());
  TrainConfig tc = first.train_rgb;
  const LabelMaps seeds =
      compute_seeds(corpus, load_baseline(a.baseline(Stream::rgb)), Stream::rgb, first.seed);
  const TrainState straight = train_stream(corpus, seeds, tc);
  const std::size_t half = tc.epochs / 2;
  tc.epochs = half;
  const TrainState part = train_stream(corpus, seeds, tc);
  const fs::path ckpt = first.output_dir / "resume_half.ckpt";
  save_checkpoint(part, ckpt);
  TrainState resumed = load_checkpoint(ckpt);
  continue_training(resumed, corpus, straight.config.epochs - half);
  resumed.config.epochs = straight.config.epochs;
  const bool resume_ok = resumed.params == straight.params && resumed.optimizer == straight.optimizer &&
                         resumed.labels == straight.labels && resumed.history == straight.history &&
                         encode_checkpoint(resumed) == encode_checkpoint(straight);

  std::string detail = differ.empty() ? "two full runs byte-identical (detections, reports, checkpoints)"
                                      : "differing artifacts:";
  for (const auto& d : differ) detail += " " + d;
  detail += resume_ok ? "; resume after " + std::to_string(half) + "/" +
                            std::to_string(straight.config.epochs) + " epochs bit-exact"
                      : "; resumed training diverged";
  return {differ.empty() && resume_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria 1-10"};
  std::string desk_path = std::string(ASSG_SOURCE_DIR) + "/configs/desk.json";
  std::string smoke_path = std::string(ASSG_SOURCE_DIR) + "/configs/smoke.json";
  std::string work = "acceptance";
  std::vector<int> only;
  app.add_option("--config", desk_path, "benchmark config for the ablations")->check(CLI::ExistingFile);
  app.add_option("--smoke", smoke_path, "small config for determinism and fusion checks")->check(CLI::ExistingFile);
  app.add_option("--work", work, "scratch directory (wiped first)");
  app.add_option("--only", only, "run just these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  keep_heap_resident();

  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };
  int failed = 0;
  auto report = [&](int k, const char* title, const Outcome& o, double seconds) {
    std::printf("criterion %2d %-28s %s  %s [%.1fs]\n", k, title, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  };
  auto timed = [&](int k, const char* title, const std::function<Outcome()>& f) {
    if (!wanted(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    report(k, title, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  try {
    fs::remove_all(work);
    fs::create_directories(work);

    RunConfig desk = load_run_config(desk_path);
    desk.output_dir = fs::path(work) / "desk";
    RunConfig smoke_a = load_run_config(smoke_path);
    RunConfig smoke_b = smoke_a;
    smoke_a.output_dir = fs::path(work) / "smoke_a";
    smoke_b.output_dir = fs::path(work) / "smoke_b";

    timed(1, "gradient suite", gradients);
    timed(2, "normalization", normalization);
    timed(3, "growing oracle", growing);
    timed(4, "nms oracle", nms_oracle);

    const bool need_desk = wanted(5) || wanted(6) || wanted(7) || wanted(10);
    if (need_desk) {
      progress("desk corpus");
      cmd_gen(desk, progress);
    }
    timed(5, "metric oracle", [&] { return metrics(read_corpus(desk.manifest_path())); });

    if (wanted(8) || wanted(9)) {
      progress("smoke pipeline, twice");
      run_pipeline(smoke_a);
      run_pipeline(smoke_b);
    }
    timed(8, "degenerate fusion", [&] { return fusion_endpoints(smoke_a); });
    timed(9, "determinism and resume", [&] { return determinism(smoke_a, smoke_b); });

    if (wanted(6) || wanted(7) || wanted(10)) {
      progress("desk baseline and seeds");
      cmd_train_baseline(desk, progress);
      cmd_seed(desk, progress);
    }
    timed(6, "module ablation", [&] { return modules(cmd_ablate(desk, Ablation::modules, progress)); });
    timed(7, "aggregation ablation", [&] { return aggregation(cmd_ablate(desk, Ablation::aggregation, progress)); });
    timed(10, "threshold sweep", [&] { return thresholds(desk, cmd_ablate(desk, Ablation::thresholds, progress)); });
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%s: %d criteria failed\n", failed ? "FAIL" : "PASS", failed);
  return failed ? 1 : 0;
}
