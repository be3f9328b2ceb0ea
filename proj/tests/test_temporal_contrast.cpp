#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "tvu/temporal_contrast.hpp"

using namespace tvu;

namespace {

std::vector<Eigen::MatrixXd> fixed_pyramid() {
  return {test::pattern(8, 3, 0.1), test::pattern(4, 3, 0.9), test::pattern(2, 3, 2.0)};
}

PyramidTargets fixed_targets() { return {{{1, 2, 5}, {0, 2}, {1}}, {{0, 7}, {1, 3}, {0}}}; }

TubeTriplet triplet(int s, int r, int o, int video = 0) {
  TubeTriplet t;
  t.subject = s;
  t.relation = r;
  t.object = o;
  t.video = video;
  t.subject_features = test::pattern(4, 3, s + 0.1 * r);
  t.object_features = test::pattern(4, 3, o - 0.2 * r);
  return t;
}

}  // namespace

TEST_CASE("sobel and motion score") {
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(6, 6);
  flow.rightCols(3).setConstant(8.0);
  const Eigen::MatrixXd mag = sobel_magnitude(flow);
  CHECK(mag(2, 2) == doctest::Approx(32.0));
  CHECK(mag(2, 3) == doctest::Approx(32.0));
  CHECK(mag(2, 0) == 0.0);

  BoolMatrix edge = BoolMatrix::Constant(6, 6, false);
  edge.block(1, 2, 4, 2).setConstant(true);
  const MotionScore s = motion_score({flow, Eigen::MatrixXd::Constant(6, 6, 3.0)},
                                     {edge, BoolMatrix::Constant(6, 6, true)});
  REQUIRE(s.per_frame.size() == 2);
  CHECK(*s.per_frame[0] == doctest::Approx(32.0));
  CHECK(*s.per_frame[1] == 0.0);
  CHECK(s.tube == doctest::Approx(32.0));

  const MotionScore partly = motion_score({flow, flow}, {edge, BoolMatrix::Constant(6, 6, false)});
  CHECK(!partly.per_frame[1].has_value());
  CHECK_THROWS(motion_score({flow}, {BoolMatrix::Constant(6, 6, false)}));
  CHECK_THROWS_AS(motion_score({flow}, {BoolMatrix::Constant(5, 6, true)}), ShapeError);
}

TEST_CASE("motion gate") {
  MotionScore hi, lo;
  hi.tube = 9.1;
  lo.tube = 8.9;
  CHECK(strong_motion(hi));
  CHECK(!strong_motion(lo));
}

TEST_CASE("ot similarity") {
  const Eigen::MatrixXd a = test::pattern(4, 5, 0.2), b = test::pattern(3, 5, 1.7);
  CHECK(std::abs(ot_similarity(a, a, kOtMargin, {0.01}) - 10.0) <= 1e-3);
  CHECK(std::abs(ot_similarity(a, b) - ot_similarity(b, a)) <= 1e-9);
  CHECK(ot_similarity(a, b, 4.0) == doctest::Approx(ot_similarity(a, b) - 6.0));
}

TEST_CASE("shuffled negatives") {
  Eigen::MatrixXd ramp(5, 2);
  for (int t = 0; t < 5; ++t) ramp.row(t) << 1.0 + t, 5.0 - t;
  const std::vector<Eigen::Index> rev{4, 3, 2, 1, 0};
  const auto negs = shuffle_negatives(ramp, {{0, 1, 2, 3, 4}, rev}, true);
  REQUIRE(negs.size() == 1);
  CHECK(negs[0] == ramp.colwise().reverse());
  CHECK(ot_distance_tubes(ramp, negs[0]) > 0.0);
  CHECK(shuffle_negatives(ramp, {rev}, false).empty());
  CHECK(shuffle_negatives(ramp.topRows(1), {{0}}, true).empty());
  CHECK_THROWS_AS(shuffle_negatives(ramp, {{0, 0, 1, 2, 3}}, true), PreconditionError);

  std::mt19937_64 rng(4);
  const auto perms = random_permutations(5, 3, rng);
  CHECK(perms.size() == 3);
  for (const auto& p : perms) CHECK(p != std::vector<Eigen::Index>{0, 1, 2, 3, 4});
}

TEST_CASE("triplet sampling") {
  const TubeTriplet anchor = triplet(1, 2, 3);
  CHECK(triplet_negative_sampling(anchor, {triplet(1, 5, 6)}, 1, 0) == std::vector<std::size_t>{0});
  const std::vector<TubeTriplet> pool{triplet(1, 2, 9), triplet(7, 8, 9)};  // share 2 and 0
  int first = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) first += triplet_negative_sampling(anchor, pool, 1, seed)[0] == 0;
  CHECK(std::abs(first / 10000.0 - 0.75) <= 0.02);
  const auto both = triplet_negative_sampling(anchor, pool, 2, 1);
  CHECK(both.size() == 2);
  CHECK(both[0] != both[1]);
  CHECK_THROWS_AS(triplet_negative_sampling(anchor, pool, 3, 0), PreconditionError);
  CHECK_THROWS_AS(triplet_negative_sampling(anchor, {}, 0, 0), PreconditionError);
  CHECK_THROWS_AS(triplet_negative_sampling(anchor, {triplet(1, 5, 6, 1)}, 1, 0), PreconditionError);

  const std::vector<TubeTriplet> others{triplet(1, 2, 3, 4), triplet(1, 2, 3, 0), triplet(1, 2, 4, 5)};
  CHECK(triplet_positive_candidates(anchor, others) == std::vector<std::size_t>{0});
  CHECK(anchor.anchor().cols() == 6);
}

TEST_CASE("motion contrastive loss") {
  CHECK(motion_contrastive_loss(3.0, Eigen::VectorXd()) == 0.0);
  CHECK(motion_contrastive_loss(2.0, Eigen::VectorXd::Constant(1, 2.0)) == doctest::Approx(std::log(2.0)));
  CHECK(motion_contrastive_loss(9.5, (Eigen::VectorXd(3) << 8.0, 9.75, 7.2).finished()) ==
        doctest::Approx(0.9583590868590672).epsilon(1e-12));
  const Eigen::MatrixXd a = test::pattern(4, 3, 0.0);
  CHECK(motion_contrastive_loss(a, a, {a}) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  const Eigen::MatrixXd n = test::pattern(4, 3, 2.5);
  const double expect = motion_contrastive_loss(ot_similarity(a, a), Eigen::VectorXd::Constant(1, ot_similarity(a, n)));
  CHECK(motion_contrastive_loss(a, a, {n}) == doctest::Approx(expect));
}

TEST_CASE("pyramid contrastive losses") {
  const auto z = fixed_pyramid();
  const auto tg = fixed_targets();
  CHECK(within_scale_loss(z, tg) == doctest::Approx(2.8896185529070335).epsilon(1e-12));
  CHECK(cross_scale_loss(z, tg) == doctest::Approx(10.401114101520673).epsilon(1e-12));

  // identical features with one identical negative: log 2 per ordered pair
  const std::vector<Eigen::MatrixXd> flat{Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(4, 2)};
  CHECK(within_scale_loss(flat, {{{0}, {0, 1, 2}}, {{1}, {3}}}) == doctest::Approx(6.0 * std::log(2.0)));
  CHECK(within_scale_loss(flat, {{{0}, {0, 1}}, {{1}, {}}}) == 0.0);
  CHECK(within_scale_loss(flat, {{{0}, {0}}, {{1}, {}}}) == 0.0);

  const std::vector<Eigen::MatrixXd> ortho{(Eigen::MatrixXd(1, 2) << 1, 0).finished(),
                                           (Eigen::MatrixXd(2, 2) << 0, 1, 0, -1).finished()};
  CHECK(cross_scale_loss(ortho, {{{0}, {0}}, {{}, {}}}) == 0.0);
  CHECK(cross_scale_loss(ortho, {{{0}, {0}}, {{}, {1}}}) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(cross_scale_loss(ortho, {{{}, {0}}, {{}, {1}}}), PreconditionError);
  CHECK_THROWS_AS(within_scale_loss(flat, {{{0}, {0}}, {{1}, {0}}}), PreconditionError);
}

TEST_CASE("c3 loss") {
  CHECK(c3_loss(test::pattern(3, 5, 0.2), test::pattern(4, 5, 1.1)) == doctest::Approx(31.822364309841763).epsilon(1e-10));
  const Eigen::MatrixXd x = test::pattern(3, 4, 0.5), y = test::pattern(3, 4, 1.5);
  CHECK(symmetric_kl_rows(x, y) == doctest::Approx(symmetric_kl_rows(y, x)));
  CHECK(std::abs(c3_loss(test::pattern(3, 4, 0.3), Eigen::MatrixXd::Identity(4, 4))) < 1e-12);
  CHECK_THROWS_AS(c3_loss(test::pattern(3, 4, 0.0), test::pattern(3, 5, 0.0)), ShapeError);
}

TEST_CASE("focal and distance-IoU") {
  CHECK(focal_loss(1.0, 1) == 0.0);
  CHECK(focal_loss(0.3, 1) == doctest::Approx(0.5899466741197086).epsilon(1e-12));
  CHECK(focal_loss(0.3, 0) == doctest::Approx(0.03210074495448592).epsilon(1e-12));
  CHECK_THROWS_AS(focal_loss(1.2, 1), PreconditionError);
  CHECK(diou_1d({2, 5}, {2, 5}) == 0.0);
  CHECK(diou_1d({0, 2}, {1, 3}) == doctest::Approx(7.0 / 9.0).epsilon(1e-15));
  CHECK_THROWS(diou_1d({3, 1}, {0, 1}));
}

TEST_CASE("combined grounding objective") {
  CHECK(combined_grounding_objective(1, 2, 3, 4, 0, 0, 0) == 1.0);
  CHECK(combined_grounding_objective(1, 2, 3, 4) == 10.0);
  CHECK(combined_grounding_objective(0, 0, 0, 0) == 0.0);
  CHECK(combined_grounding_objective(1, 2, 3, 4, 0.5, 2.0, 0.25) == doctest::Approx(9.0));
}

TEST_CASE("graph losses agree with scalar versions and finite differences") {
  const auto z = fixed_pyramid();
  const auto tg = fixed_targets();
  {
    ad::Graph g;
    std::vector<ad::Var> zv;
    for (std::size_t l = 0; l < z.size(); ++l) zv.push_back(g.leaf("z" + std::to_string(l), z[l]));
    g.set_root(graph::within_scale_loss(zv, tg) + 0.5 * graph::cross_scale_loss(zv, tg));
    CHECK(g.forward_scalar() == doctest::Approx(within_scale_loss(z, tg) + 0.5 * cross_scale_loss(z, tg)));
    for (const auto& [name, grad] : g.backward()) {
      INFO(name);
      CHECK(ad::relative_error(grad, ad::finite_diff_gradient(g, name, 1e-6)) < 1e-5);
    }
  }
  {
    ad::Graph g;
    ad::Var jv = g.leaf("jv", test::pattern(3, 5, 0.2));
    ad::Var jw = g.leaf("jw", test::pattern(4, 5, 1.1));
    g.set_root(graph::c3_loss(jv, jw));
    CHECK(g.forward_scalar() == doctest::Approx(31.822364309841763).epsilon(1e-10));
    for (const auto& [name, grad] : g.backward()) {
      CHECK(ad::relative_error(grad, ad::finite_diff_gradient(g, name, 1e-6)) < 1e-5);
    }
  }
  {
    ad::Graph g;
    ad::Var sims = g.leaf("s", (Eigen::MatrixXd(1, 4) << 9.5, 8.0, 9.75, 7.2).finished());
    ad::Var p = g.leaf("p", (Eigen::MatrixXd(1, 3) << 0.3, 0.8, 0.55).finished());
    ad::Var span = g.leaf("span", (Eigen::MatrixXd(1, 2) << 0.2, 2.4).finished());
    ad::Var loss = graph::motion_contrastive_loss(sims) +
                   graph::focal_loss(p, (Eigen::MatrixXd(1, 3) << 1, 0, 1).finished()) +
                   graph::diou_1d(span, {1.0, 3.0});
    g.set_root(loss);
    const double expect = 0.9583590868590672 + focal_loss(0.3, 1) + focal_loss(0.8, 0) + focal_loss(0.55, 1) +
                          diou_1d({0.2, 2.4}, {1.0, 3.0});
    CHECK(g.forward_scalar() == doctest::Approx(expect).epsilon(1e-12));
    for (const auto& [name, grad] : g.backward()) {
      INFO(name);
      CHECK(ad::relative_error(grad, ad::finite_diff_gradient(g, name, 1e-6)) < 1e-5);
    }
  }
}
