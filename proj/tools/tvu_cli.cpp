// Command-line front end for the experiments and demos.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "tvu/harness/config.hpp"
#include "tvu/harness/csv.hpp"
#include "tvu/harness/demos.hpp"
#include "tvu/harness/experiments.hpp"

namespace fs = std::filesystem;
using namespace tvu::harness;

int main(int argc, char** argv) {
  CLI::App app{"tvu: partial transport, contrastive losses, sequence layers and grounding utilities"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed");
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory (default: $TVU_OUT_DIR or the config's out_dir)");

  auto resolve = [&]() {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (*seed_opt) c.seed = seed;
    if (!out_dir.empty()) {
      c.out_dir = out_dir;
    } else if (const char* env = std::getenv("TVU_OUT_DIR"); env && *env) {
      c.out_dir = env;
    }
    c.validate();
    return c;
  };
  auto out_file = [](const ExperimentConfig& c, const std::string& name) { return (fs::path(c.out_dir) / name).string(); };

  auto* potdist_cmd = app.add_subcommand("potdist", "Partial-alignment distance between two feature CSVs");
  std::string a_csv, b_csv;
  double tau = -1.0;
  int n_iter = -1;
  potdist_cmd->add_option("a", a_csv, "First sequence (rows = time steps)")->required()->check(CLI::ExistingFile);
  potdist_cmd->add_option("b", b_csv, "Second sequence")->required()->check(CLI::ExistingFile);
  potdist_cmd->add_option("--tau", tau, "Entropic temperature");
  potdist_cmd->add_option("--n-iter", n_iter, "Iteration cap");

  auto* margin_cmd = app.add_subcommand("margin-demo", "Per-step margin and contrastive losses (CSV)");
  auto* meta_cmd = app.add_subcommand("meta-train", "Bilevel reweighting trace on the label-noise task (CSV)");
  auto* ssm_cmd = app.add_subcommand("ssm-check", "SSM equivalence table and timing CSV");
  auto* contrast_cmd = app.add_subcommand("contrast-demo", "Sequence contrastive losses on synthetic videos (CSV)");

  auto* key_cmd = app.add_subcommand("keyframes", "Density-peak key frames of a frame-feature CSV");
  std::string features_csv;
  long key_k = -1, key_q = -1;
  key_cmd->add_option("features", features_csv, "Frame features (rows = frames)")->required()->check(CLI::ExistingFile);
  key_cmd->add_option("-k,--neighbours", key_k, "Neighbour count K");
  key_cmd->add_option("-q,--select", key_q, "Number of key frames Q");

  auto* ground_cmd = app.add_subcommand("ground-eval", "Recall@K x tIoU from prediction and ground-truth CSVs");
  std::string pred_csv, gt_csv;
  std::vector<std::size_t> ks{1, 5};
  std::vector<double> thetas{0.3, 0.5};
  bool nms = false;
  ground_cmd->add_option("--pred", pred_csv, "Predictions: query_id,start,end,score")->required()->check(CLI::ExistingFile);
  ground_cmd->add_option("--gt", gt_csv, "Ground truth: query_id,start,end[,score]")->required()->check(CLI::ExistingFile);
  ground_cmd->add_option("--k", ks, "K values")->delimiter(',');
  ground_cmd->add_option("--tiou", thetas, "tIoU thresholds")->delimiter(',');
  ground_cmd->add_flag("--nms", nms, "Apply Soft-NMS to each query's predictions first");

  auto* run_cmd = app.add_subcommand("run", "Run one experiment (config-driven)");
  std::string experiment;
  run_cmd->add_option("-e,--experiment", experiment, "Experiment name (overrides the config)");

  auto* self_cmd = app.add_subcommand("selftest", "Run the full acceptance suite");
  auto* list_cmd = app.add_subcommand("list", "List experiment names");
  auto* config_cmd = app.add_subcommand("config", "Print the effective configuration as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig c = resolve();
    if (*potdist_cmd) {
      if (tau > 0.0) c.ot.tau = tau;
      if (n_iter > 0) c.ot.n_iter = n_iter;
      std::cout << format_number(potdist(a_csv, b_csv, c, out_file(c, "potdist.csv"))) << "\n";
    } else if (*margin_cmd) {
      margin_demo(c, out_file(c, "margin_demo.csv"));
      std::cout << out_file(c, "margin_demo.csv") << "\n";
    } else if (*meta_cmd) {
      meta_train(c, out_file(c, "meta_train.csv"));
      std::cout << out_file(c, "meta_train.csv") << "\n";
    } else if (*ssm_cmd) {
      const bool ok = ssm_check(c, out_file(c, "ssm_check.csv"), out_file(c, "ssm_timing.csv"));
      std::cout << (ok ? "PASS" : "FAIL") << " " << out_file(c, "ssm_check.csv") << "\n";
      return ok ? 0 : 1;
    } else if (*contrast_cmd) {
      contrast_demo(c, out_file(c, "contrast_demo.csv"));
      std::cout << out_file(c, "contrast_demo.csv") << "\n";
    } else if (*key_cmd) {
      if (key_k > 0) c.keyframe.k = key_k;
      if (key_q > 0) c.keyframe.q = key_q;
      for (auto i : keyframes(features_csv, c, out_file(c, "keyframes.csv"))) std::cout << i << "\n";
    } else if (*ground_cmd) {
      ground_eval(pred_csv, gt_csv, ks, thetas, nms, c, out_file(c, "ground_eval.csv"));
      std::cout << out_file(c, "ground_eval.csv") << "\n";
    } else if (*run_cmd) {
      if (!experiment.empty()) c.experiment = experiment;
      const ExperimentReport r = run_experiment(c);
      std::cout << format_report_line(find_experiment(r.experiment), r) << "\n";
      return r.passed() ? 0 : 1;
    } else if (*self_cmd) {
      return run_selftest(c, std::cout, true) == 0 ? 0 : 1;
    } else if (*list_cmd) {
      for (const auto& e : experiments()) std::cout << e.criterion << "\t" << e.name << "\t" << e.title << "\n";
    } else if (*config_cmd) {
      std::cout << to_json(c).dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
