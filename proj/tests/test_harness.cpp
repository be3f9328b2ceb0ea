#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tvu/harness/config.hpp"
#include "tvu/harness/csv.hpp"
#include "tvu/harness/demos.hpp"
#include "tvu/harness/experiments.hpp"
#include "tvu/harness/synthetic.hpp"

using namespace tvu;
using namespace tvu::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "tvu_harness_tests" / name;
  fs::create_directories(p.parent_path());
  return p;
}

}  // namespace

TEST_CASE("config round trip") {
  ExperimentConfig c;
  c.experiment = "pot-oracle";
  c.seed = 99;
  c.ot.tau = 0.1;
  c.meta.beta = 3.0;
  c.grounding.c3_weight = 0.01;
  CHECK(config_from_json(to_json(c)) == c);
  const std::string path = scratch("cfg.json").string();
  save_config(c, path);
  CHECK(load_config(path) == c);
  CHECK(!(load_config(path) == ExperimentConfig{}));
}

TEST_CASE("config errors") {
  nlohmann::json j = to_json(ExperimentConfig{});
  j["ot"]["tua"] = 0.1;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ot.tua") != std::string::npos);
  }
  nlohmann::json partial = {{"seed", 3}, {"ot", {{"tau", 0.2}}}};
  const ExperimentConfig c = config_from_json(partial);
  CHECK(c.seed == 3);
  CHECK(c.ot.tau == 0.2);
  CHECK(c.ot.n_iter == 1000);
  CHECK_THROWS_AS(config_from_json({{"ot", {{"tau", -1.0}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"seed", "seven"}}), ConfigError);
}

TEST_CASE("csv round trips") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  const Eigen::MatrixXd m = (Eigen::MatrixXd(2, 3) << 1.0 / 3.0, -2, 1e-300, 4, 5.5, 6).finished();
  const std::string path = scratch("m.csv").string();
  write_matrix_csv(path, m, {"a", "b", "c"});
  CHECK(read_matrix_csv(path) == m);
  write_matrix_csv(path, m);
  CHECK(read_matrix_csv(path) == m);

  const std::vector<QuerySpan> spans{{"q1", {0.5, 2.5, 0.9}}, {"q2", {1, 3, 0.25}}};
  const std::string sp = scratch("spans.csv").string();
  write_spans_csv(sp, spans);
  const auto back = read_spans_csv(sp);
  REQUIRE(back.size() == 2);
  CHECK(back[1].query == "q2");
  CHECK(back[0].span.end == 2.5);
  CHECK(back[1].span.score == 0.25);

  std::ofstream(scratch("ragged.csv")) << "a,b\n1,2\n3\n";
  CHECK_THROWS(read_csv(scratch("ragged.csv").string()));
}

TEST_CASE("paired embedding generator") {
  SyntheticPairSpec spec;
  spec.align = 1.0;
  spec.seed = 4;
  const PairedEmbeddings tight = gen_paired_embeddings(spec);
  CHECK((tight.cosine_similarity().diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(std::none_of(tight.noisy.begin(), tight.noisy.end(), [](bool b) { return b; }));

  spec.align = 0.0;
  spec.pairs = 10000;
  const PairedEmbeddings loose = gen_paired_embeddings(spec);
  double mean = 0.0;
  for (Eigen::Index i = 0; i < spec.pairs; ++i)
    mean += loose.video.row(i).normalized().dot(loose.text.row(i).normalized());
  CHECK(std::abs(mean / double(spec.pairs)) <= 0.05);

  spec.pairs = 1000;
  spec.noisy_fraction = 0.3;
  const PairedEmbeddings noisy = gen_paired_embeddings(spec);
  const auto flagged = std::count(noisy.noisy.begin(), noisy.noisy.end(), true);
  CHECK(flagged > 200);
  CHECK(flagged < 400);
}

TEST_CASE("label noise task") {
  const LabelNoiseTask t = gen_label_noise_task(500, 10, 100, 0.4, 7);
  CHECK(t.train.size() == 500);
  CHECK(t.meta.size() == 100);
  const auto flipped = std::count(t.train.noisy.begin(), t.train.noisy.end(), true);
  CHECK(flipped > 150);
  CHECK(flipped < 250);
  for (Eigen::Index i = 0; i < t.meta.size(); ++i) CHECK(t.meta.y[i] == double(t.meta.x.row(i).dot(t.truth) > 0));
}

TEST_CASE("event videos and pooled pyramids") {
  const EventVideo v = gen_event_video(64, 8, {{10, 20, 0}, {40, 44, -1}}, 3);
  CHECK(v.features.rows() == 64);
  REQUIRE(v.moments.size() == 2);
  CHECK(v.moments[0].start == 10);
  REQUIRE(v.targets.size() == 2);
  CHECK(v.targets[0].levels() == 4);
  CHECK(!v.targets[0].positives[0].empty());
  CHECK_THROWS(gen_event_video(64, 8, {{10, 20, 1}, {15, 25, 1}}, 3));

  const Eigen::MatrixXd x = Eigen::VectorXd::LinSpaced(5, 0, 4);
  const auto pyr = pyramid_features(x, 3);
  REQUIRE(pyr.size() == 3);
  CHECK(pyr[1].rows() == 3);
  CHECK(pyr[1](0, 0) == 0.5);
  CHECK(pyr[1](2, 0) == 4.0);
  CHECK(pyr[2](0, 0) == 1.5);
}

TEST_CASE("experiment registry and reports") {
  const auto& all = experiments();
  CHECK(all.size() == 13);
  for (int i = 0; i < 13; ++i) CHECK(all[std::size_t(i)].criterion == i + 1);
  CHECK_THROWS(find_experiment("nope"));

  ExperimentConfig c;
  c.experiment = "margin-schedule";
  c.out_dir = scratch("runs").string();
  const ExperimentReport a = run_experiment(c);
  const ExperimentReport b = run_experiment(c, false);
  CHECK(a.summary() == b.summary());
  CHECK(a.passed());
  CHECK(fs::exists(fs::path(c.out_dir) / "margin-schedule.json"));
  const std::string line = format_report_line(find_experiment("margin-schedule"), a);
  CHECK(line.rfind("PASS  criterion 4", 0) == 0);
}

TEST_CASE("demo subcommands write their tables") {
  ExperimentConfig c;
  c.out_dir = scratch("demos").string();
  c.margin.steps = 20;
  const std::string margin = (fs::path(c.out_dir) / "margin.csv").string();
  margin_demo(c, margin);
  const CsvTable t = read_csv(margin);
  CHECK(t.rows.size() == 21);
  CHECK(t.header.at(1) == "mu");

  const std::string a = scratch("a.csv").string(), b = scratch("b.csv").string();
  write_matrix_csv(a, (Eigen::MatrixXd(2, 2) << 1, 0, 0, 1).finished());
  write_matrix_csv(b, (Eigen::MatrixXd(3, 2) << 1, 0.1, 0.2, 1, 1, 1).finished());
  const double d = potdist(a, b, c, scratch("pot.csv").string());
  CHECK(d >= 0.0);
  CHECK(d < 0.05);

  write_matrix_csv(a, (Eigen::MatrixXd(5, 2) << 0.0, 0.0, 0.3, 0.1, 0.1, 0.4, 2.0, 2.0, 0.25, -0.35).finished());
  c.keyframe.k = 2;
  c.keyframe.q = 2;
  CHECK(keyframes(a, c, scratch("kf.csv").string()) == std::vector<Eigen::Index>{1, 4});

  write_spans_csv(a, {{"q1", {0, 10, 0.9}}, {"q1", {0, 9, 0.8}}, {"q2", {20, 30, 0.7}}});
  write_spans_csv(b, {{"q1", {0, 10, 1}}, {"q2", {0, 10, 1}}});
  const std::string out = scratch("ground.csv").string();
  ground_eval(a, b, {1}, {0.5}, false, c, out);
  const CsvTable g = read_csv(out);
  REQUIRE(g.rows.size() == 1);
  CHECK(std::stod(g.rows[0].back()) == doctest::Approx(50.0));
}
