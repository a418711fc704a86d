#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "assg/config.hpp"
#include "assg/pipeline.hpp"

namespace {

void log_line(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"assg: synthetic corpus, seeds, training, detection and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);
    return sub;
  };

  auto* gen = with_config(app.add_subcommand("gen", "generate the synthetic corpus"));
  auto* baseline = with_config(app.add_subcommand("train-baseline", "train the CAS baseline per stream"));
  auto* seed = with_config(app.add_subcommand("seed", "extract initial seeds"));
  auto* train = with_config(app.add_subcommand("train", "train one stream"));
  std::string stream = "rgb";
  train->add_option("--stream", stream, "rgb or flow")->required()->check(CLI::IsMember({"rgb", "flow"}));
  auto* detect = with_config(app.add_subcommand("detect", "fuse both streams and detect"));
  auto* eval = with_config(app.add_subcommand("eval", "score detections"));
  auto* plot = with_config(app.add_subcommand("plot", "plot one video's fused heatmap"));
  std::string video;
  plot->add_option("--video", video, "video id")->required();
  auto* ablate = with_config(app.add_subcommand("ablate", "run an ablation table"));
  std::string which;
  ablate->add_option("--which", which, "aggregation, thresholds or modules")
      ->required()
      ->check(CLI::IsMember({"aggregation", "thresholds", "modules"}));

  CLI11_PARSE(app, argc, argv);
  assg::keep_heap_resident();

  try {
    const assg::RunConfig cfg = assg::load_run_config(config_path);
    if (gen->parsed()) {
      assg::cmd_gen(cfg, log_line);
    } else if (baseline->parsed()) {
      assg::cmd_train_baseline(cfg, log_line);
    } else if (seed->parsed()) {
      assg::cmd_seed(cfg, log_line);
    } else if (train->parsed()) {
      assg::cmd_train(cfg, assg::parse_stream(stream), log_line);
    } else if (detect->parsed()) {
      assg::cmd_detect(cfg, log_line);
    } else if (eval->parsed()) {
      assg::cmd_eval(cfg, log_line);
    } else if (plot->parsed()) {
      assg::cmd_plot(cfg, video, log_line);
    } else if (ablate->parsed()) {
      std::cout << assg::format_table(assg::cmd_ablate(cfg, assg::parse_ablation(which), log_line));
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    return 1;
  }
  return 0;
}
