#include "tvu/harness/demos.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "tvu/grounding.hpp"
#include "tvu/harness/csv.hpp"
#include "tvu/harness/synthetic.hpp"
#include "tvu/keyframe.hpp"
#include "tvu/margin_contrast.hpp"
#include "tvu/meta_reweight.hpp"
#include "tvu/partial_ot.hpp"
#include "tvu/seq_layers.hpp"
#include "tvu/temporal_contrast.hpp"

namespace tvu::harness {
namespace {

SinkhornOptions ot_options(const ExperimentConfig& c) {
  SinkhornOptions o;
  o.tau = c.ot.tau;
  o.max_iter = c.ot.n_iter;
  return o;
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

}  // namespace

double potdist(const std::string& a_csv, const std::string& b_csv, const ExperimentConfig& config,
               const std::string& out_csv) {
  const Eigen::MatrixXd a = read_matrix_csv(a_csv);
  const Eigen::MatrixXd b = read_matrix_csv(b_csv);
  const MassSweep sweep = pvla_sweep(a, b, ot_options(config));
  CsvTable t;
  t.header = {"mass", "cost"};
  for (std::size_t i = 0; i < sweep.masses.size(); ++i) {
    t.rows.push_back({format_number(sweep.masses[i]), format_number(sweep.per_mass_cost[i])});
  }
  ensure_parent(out_csv);
  write_csv(out_csv, t);
  return sweep.distance;
}

void margin_demo(const ExperimentConfig& config, const std::string& out_csv) {
  SyntheticPairSpec spec;
  spec.pairs = 16;
  spec.dims = 32;
  spec.align = 0.7;
  spec.seed = config.seed;
  const Eigen::MatrixXd s = gen_paired_embeddings(spec).cosine_similarity();
  const MarginSchedule sched{config.margin.a0, config.margin.a1, config.margin.a2};
  const double tau = config.margin.tau;
  CsvTable t;
  t.header = {"k", "mu", "loss_vt", "loss_tv", "infonce_vt", "infonce_tv", "total"};
  const long stride = std::max<long>(1, config.margin.steps / 100);
  for (long k = 0; k <= config.margin.steps; k += stride) {
    const double mu = margin_at_step(sched, k);
    double vt = 0.0, tv = 0.0, ivt = 0.0, itv = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      vt += angular_margin_loss(s, tau, mu, i, Direction::VideoToText);
      tv += angular_margin_loss(s, tau, mu, i, Direction::TextToVideo);
      ivt += infonce_loss(s, tau, i, Direction::VideoToText);
      itv += infonce_loss(s, tau, i, Direction::TextToVideo);
    }
    const double n = static_cast<double>(s.rows());
    t.rows.push_back({std::to_string(k), format_number(mu), format_number(vt / n), format_number(tv / n),
                      format_number(ivt / n), format_number(itv / n),
                      format_number(total_objective(vt / n, tv / n, 0.0, config.margin.eta))});
  }
  ensure_parent(out_csv);
  write_csv(out_csv, t);
}

void meta_train(const ExperimentConfig& config, const std::string& out_csv) {
  const auto& m = config.meta;
  const LabelNoiseTask task = gen_label_noise_task(m.samples, m.dims, m.meta_samples, m.noise, config.seed);
  MetaTrainingConfig mc;
  mc.steps = m.steps;
  mc.alpha = m.alpha;
  mc.beta = m.beta;
  mc.batch = m.batch;
  mc.meta_batch = m.meta_batch;
  mc.hidden = m.hidden;
  mc.seed = config.seed;
  const MetaTrainingResult res = run_meta_training(mc, task.train, task.meta, Eigen::VectorXd::Zero(m.dims));
  CsvTable t;
  t.header = {"step", "mean_weight_clean", "mean_weight_noisy", "train_loss", "meta_loss"};
  for (const auto& r : res.trace) {
    t.rows.push_back({std::to_string(r.step), format_number(r.mean_weight_clean), format_number(r.mean_weight_noisy),
                      format_number(r.train_loss), format_number(r.meta_loss)});
  }
  ensure_parent(out_csv);
  write_csv(out_csv, t);
}

bool ssm_check(const ExperimentConfig& config, const std::string& table_csv, const std::string& timing_csv) {
  CsvTable table;
  table.header = {"experiment", "check", "value", "threshold", "pass"};
  bool ok = true;
  for (const char* name : {"ssm-equivalence", "adapter-identity", "ssm-scaling"}) {
    ExperimentConfig c = config;
    c.experiment = name;
    const ExperimentReport r = run_experiment(c, false);
    for (const auto& a : r.assertions) {
      table.rows.push_back({name, a.name, format_number(a.value), format_number(a.threshold), a.pass ? "1" : "0"});
      ok = ok && a.pass;
    }
    for (const auto& [tname, rows] : r.tables) {
      if (tname != "ssm_scaling") continue;
      CsvTable timing;
      timing.header = rows.front();
      timing.rows.assign(rows.begin() + 1, rows.end());
      ensure_parent(timing_csv);
      write_csv(timing_csv, timing);
    }
  }
  ensure_parent(table_csv);
  write_csv(table_csv, table);
  return ok;
}

void contrast_demo(const ExperimentConfig& config, const std::string& out_csv) {
  CsvTable t;
  t.header = {"trial", "noise", "within", "cross", "c3", "motion", "focal", "diou", "combined"};
  std::mt19937_64 rng(config.seed);
  const auto& g = config.grounding;
  const int levels = static_cast<int>(g.levels);
  for (int trial = 0; trial < 5; ++trial) {
    for (double noise : {0.0, 0.5, 1.0}) {
      const EventVideo video =
          gen_event_video(64, 16, {{10, 26, -1}}, config.seed + static_cast<std::uint64_t>(trial), levels, g.center_alpha);
      Eigen::MatrixXd x = video.features + noise * gaussian_matrix(64, 16, rng);
      const auto pyr = pyramid_features(x.rowwise().normalized(), levels);
      const double within = within_scale_loss(pyr, video.targets[0]);
      const double cross = cross_scale_loss(pyr, video.targets[0]);

      const Eigen::MatrixXd jv = gaussian_matrix(6, 8, rng, 0.5);
      const Eigen::MatrixXd jw = gaussian_matrix(4, 8, rng, 0.5);
      const double c3 = config.grounding.c3_weight * c3_loss(jv, jw);

      Eigen::MatrixXd ramp(8, 4);
      for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) ramp(i, j) = 1.0 + static_cast<double>(i * (j + 1)) / 8.0;
      const Eigen::MatrixXd positive = ramp + noise * 0.1 * gaussian_matrix(8, 4, rng);
      auto perms = random_permutations(8, config.ot.shuffles, rng);
      const auto negatives = shuffle_negatives(ramp, perms, true);
      SinkhornOptions o = ot_options(config);
      const double motion = motion_contrastive_loss(ramp, positive, negatives, config.ot.alpha, o);

      const double focal = focal_loss(std::clamp(0.9 - 0.3 * noise, 0.01, 0.99), 1);
      const double diou = diou_1d({10.0 + 4.0 * noise, 26.0 + 2.0 * noise}, {10.0, 26.0});
      const double combined = combined_grounding_objective(focal, diou, within, cross, g.rho_reg, g.rho_within, g.rho_cross);
      t.rows.push_back({std::to_string(trial), format_number(noise), format_number(within), format_number(cross),
                        format_number(c3), format_number(motion), format_number(focal), format_number(diou),
                        format_number(combined)});
    }
  }
  ensure_parent(out_csv);
  write_csv(out_csv, t);
}

std::vector<Eigen::Index> keyframes(const std::string& features_csv, const ExperimentConfig& config,
                                    const std::string& out_csv) {
  FrameSet f;
  f.features = read_matrix_csv(features_csv);
  f.k = std::min<Eigen::Index>(config.keyframe.k, f.features.rows() - 1);
  f.q = std::min<Eigen::Index>(config.keyframe.q, f.features.rows());
  const auto idx = select_keyframes(f);
  CsvTable t;
  t.header = {"index"};
  for (Eigen::Index i : idx) t.rows.push_back({std::to_string(i)});
  ensure_parent(out_csv);
  write_csv(out_csv, t);
  return idx;
}

void ground_eval(const std::string& pred_csv, const std::string& gt_csv, const std::vector<std::size_t>& ks,
                 const std::vector<double>& thetas, bool apply_nms, const ExperimentConfig& config,
                 const std::string& out_csv) {
  const auto preds = read_spans_csv(pred_csv);
  const auto gts = read_spans_csv(gt_csv);
  std::map<std::string, std::vector<MomentSpan>> by_query;
  for (const auto& p : preds) by_query[p.query].push_back(p.span);
  std::vector<std::vector<MomentSpan>> ranked;
  std::vector<MomentSpan> truth;
  for (const auto& g : gts) {
    std::vector<MomentSpan> list = by_query[g.query];
    std::stable_sort(list.begin(), list.end(), [](const MomentSpan& a, const MomentSpan& b) { return a.score > b.score; });
    if (apply_nms) {
      SoftNmsOptions o;
      o.sigma = config.grounding.nms_sigma;
      o.score_floor = config.grounding.score_floor;
      list = soft_nms(list, o);
    }
    ranked.push_back(std::move(list));
    truth.push_back(g.span);
  }
  CsvTable t;
  t.header = {"k", "tiou", "recall"};
  for (std::size_t k : ks)
    for (double th : thetas)
      t.rows.push_back({std::to_string(k), format_number(th), format_number(recall_at_k(ranked, truth, k, th))});
  ensure_parent(out_csv);
  write_csv(out_csv, t);
}

std::string format_report_line(const ExperimentInfo& info, const ExperimentReport& report) {
  std::ostringstream line;
  line << (report.passed() ? "PASS" : "FAIL") << "  criterion " << info.criterion << "  " << info.name << ":";
  for (std::size_t i = 0; i < report.assertions.size(); ++i) {
    const auto& a = report.assertions[i];
    line << (i ? ";" : "") << " " << a.name << " = " << format_number(a.value) << (a.pass ? "" : " [violated]");
  }
  return line.str();
}

int run_selftest(const ExperimentConfig& config, std::ostream& out, bool write_files) {
  int failures = 0;
  for (const auto& info : experiments()) {
    ExperimentConfig c = config;
    c.experiment = info.name;
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentReport r = run_experiment(c, write_files);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << format_report_line(info, r) << "  (" << format_number(std::round(secs * 100) / 100) << " s)" << std::endl;
    failures += !r.passed();
  }
  return failures;
}

}  // namespace tvu::harness
