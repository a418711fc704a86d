#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <tuple>

#include "assg/errors.hpp"
#include "assg/pipeline.hpp"

namespace py = pybind11;
using namespace assg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ProposalTuple = std::tuple<int, std::size_t, std::size_t, double>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::span<const double>(a.data(), rows * cols));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

std::vector<ProposalTuple> to_tuples(const std::vector<Proposal>& ps) {
  std::vector<ProposalTuple> out;
  for (const auto& p : ps) out.emplace_back(p.label, p.start, p.end, p.score);
  return out;
}

std::string run(const std::string& verb, const std::string& config, const std::string& stream,
                const std::string& video, const std::string& which) {
  const RunConfig cfg = load_run_config(config);
  py::gil_scoped_release release;
  if (verb == "gen") cmd_gen(cfg);
  else if (verb == "train-baseline") cmd_train_baseline(cfg);
  else if (verb == "seed") cmd_seed(cfg);
  else if (verb == "train") cmd_train(cfg, parse_stream(stream));
  else if (verb == "detect") cmd_detect(cfg);
  else if (verb == "eval") return report_to_json(cmd_eval(cfg));
  else if (verb == "plot") cmd_plot(cfg, video);
  else if (verb == "ablate") return format_table(cmd_ablate(cfg, parse_ablation(which)));
  else throw std::invalid_argument("unknown verb '" + verb + "'");
  return {};
}

}  // namespace

PYBIND11_MODULE(_assg, m) {
  m.doc() = "Bindings for the assg localization pipeline";

  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);

  m.def("config_json", [](const std::string& path) { return to_json(load_run_config(path)).dump(); },
        py::arg("path"), "Resolved config (defaults filled, ASSG_SEED applied) as JSON text.");

  m.def("run", &run, py::arg("verb"), py::arg("config"), py::arg("stream") = "", py::arg("video") = "",
        py::arg("which") = "",
        "Run one CLI verb. eval returns the report JSON, ablate the markdown table.");

  m.def("temporal_iou",
        py::overload_cast<std::size_t, std::size_t, std::size_t, std::size_t>(&temporal_iou),
        py::arg("a_start"), py::arg("a_end"), py::arg("b_start"), py::arg("b_end"));

  m.def("nms",
        [](const std::vector<ProposalTuple>& in, double iou) {
          std::vector<Proposal> ps;
          for (const auto& [c, s, e, score] : in) {
            if (s > e) throw py::value_error("proposal start > end");
            ps.push_back({c, s, e, score});
          }
          return to_tuples(nms(std::move(ps), iou));
        },
        py::arg("proposals"), py::arg("iou_threshold"),
        "proposals: (class, start, end, score) tuples, inclusive ends.");

  m.def("average_precision",
        [](const std::vector<std::tuple<std::string, std::size_t, std::size_t, double>>& preds,
           const std::vector<std::tuple<std::string, std::size_t, std::size_t>>& truth, double iou) {
          std::vector<ScoredInterval> p;
          for (const auto& [v, s, e, score] : preds) p.push_back({v, s, e, score});
          std::vector<Interval> g;
          for (const auto& [v, s, e] : truth) g.push_back({v, s, e});
          return average_precision(p, g, iou);
        },
        py::arg("predictions"), py::arg("ground_truth"), py::arg("iou_threshold"));

  m.def("fuse_heatmaps",
        [](const Array& rgb, const Array& flow, double ratio) {
          return to_array(fuse_heatmaps(to_matrix(rgb), to_matrix(flow), ratio));
        },
        py::arg("rgb"), py::arg("flow"), py::arg("ratio"));

  m.def("detect",
        [](const Array& fused, std::vector<double> thresholds, double nms_iou, std::size_t min_length) {
          DetectConfig cfg;
          cfg.thresholds = std::move(thresholds);
          cfg.nms_iou = nms_iou;
          cfg.min_length = min_length;
          cfg.validate();
          return to_tuples(detect(to_matrix(fused), cfg));
        },
        py::arg("fused"), py::arg("thresholds") = DetectConfig{}.thresholds, py::arg("nms_iou") = 0.5,
        py::arg("min_length") = 1);

  m.def("heatmap",
        [](const std::string& checkpoint, const Array& features) {
          const TrainState state = load_checkpoint(checkpoint);
          const Matrix f = to_matrix(features);  // N x K
          const FeatureSequence fs(f.rows(), f.cols(), std::vector<double>(f.data().begin(), f.data().end()));
          return to_array(ssg_heatmap(state.params, fs).values);
        },
        py::arg("checkpoint"), py::arg("features"),
        "(C+1) x N heatmap of a trained stream for N x K features.");

  m.def("grow_step",
        [](const Array& heatmap, std::vector<int> labels, double theta_fg, double theta_bg) {
          const Heatmap h{to_matrix(heatmap)};
          if (labels.size() != h.n_segments()) throw py::value_error("labels length differs from heatmap columns");
          SeedLabelMap map(labels.size(), h.num_classes());
          map.state = std::move(labels);
          return grow_step(h, map, growth_thresholds(h.num_classes(), theta_fg, theta_bg)).labels.state;
        },
        py::arg("heatmap"), py::arg("labels"), py::arg("theta_fg"), py::arg("theta_bg"),
        "One growing sweep; labels use -1 for unlabeled, 0 for background.");
}
