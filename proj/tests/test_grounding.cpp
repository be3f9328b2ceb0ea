#include <doctest.h>

#include <random>

#include "tvu/grounding.hpp"
#include "tvu/oracles.hpp"

using namespace tvu;

TEST_CASE("tiou") {
  CHECK(tiou({0, 10}, {0, 10}) == 1.0);
  CHECK(tiou({0, 10}, {10, 20}) == 0.0);
  CHECK(tiou({0, 10}, {5, 15}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS(tiou({5, 1}, {0, 1}));
}

TEST_CASE("pyramid lengths and center sampling") {
  CHECK(pyramid_lengths(64, 4) == std::vector<Eigen::Index>{64, 32, 16, 8});
  CHECK(center_sampling_targets(32, 2, 64, 1.5) == std::vector<Eigen::Index>{7, 8, 9});
  CHECK(center_sampling_targets(10.2, 0, 64, 1e-6) == std::vector<Eigen::Index>{10});
  CHECK(center_sampling_targets(10, 0, 64, 1.0) == std::vector<Eigen::Index>{9, 10, 11});
  CHECK(center_sampling_targets(0.5, 0, 64, 1e-6) == std::vector<Eigen::Index>{0});  // tie -> lower index
}

TEST_CASE("decoding") {
  PyramidGrid grid = PyramidGrid::zeros(32, 2, LevelOrigin::One);
  grid.levels[0].score[10] = 0.9;
  grid.levels[0].d_start[10] = 2;
  grid.levels[0].d_end[10] = 3;
  DecodedMoment m = decode_moment(grid);
  CHECK(m.span.start == 8.0);
  CHECK(m.span.end == 13.0);
  CHECK(m.level == 1);
  CHECK(m.step == 10);

  grid.levels[0].score[10] = 0.0;
  grid.levels[1].score[10] = 0.9;
  grid.levels[1].d_start[10] = 2;
  grid.levels[1].d_end[10] = 3;
  m = decode_moment(grid);
  CHECK(m.span.start == 16.0);
  CHECK(m.span.end == 26.0);
  CHECK(m.level == 2);

  PyramidGrid zero = PyramidGrid::zeros(32, 2, LevelOrigin::Zero);
  CHECK(zero.label(0) == 0);
  CHECK(zero.stride(1) == 2.0);

  PyramidGrid one = PyramidGrid::zeros(1, 1);
  one.levels[0].score[0] = 0.4;
  one.levels[0].d_end[0] = 1.0;
  const auto all = decode_all(one, 0.0);
  REQUIRE(all.size() == 1);
  CHECK(all[0].start == 0.0);
  CHECK(all[0].end == 1.0);
  CHECK(all[0].score == 0.4);
}

TEST_CASE("soft NMS") {
  CHECK(soft_nms({}).empty());
  const auto apart = soft_nms({{0, 1, 0.3}, {5, 6, 0.9}, {10, 11, 0.5}});
  REQUIRE(apart.size() == 3);
  CHECK(apart[0].score == 0.9);
  CHECK(apart[1].score == 0.5);
  CHECK(apart[2].score == 0.3);
  const auto dup = soft_nms({{0, 10, 0.9}, {0, 10, 0.8}});
  REQUIRE(dup.size() == 2);
  CHECK(dup[1].score / 0.8 == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
  CHECK(soft_nms({{0, 10, 0.9}, {0, 10, 0.8}, {20, 30, 0.1}}, {0.5, 1}).size() == 1);
  CHECK(soft_nms({{0, 10, 0.9}, {0, 10, 0.001}}, {0.5, 10, 1e-3}).size() == 1);
}

TEST_CASE("soft NMS at vanishing sigma equals hard NMS") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatch = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<MomentSpan> pool;
    const int n = int(u(rng) * 25);
    for (int i = 0; i < n; ++i) {
      const double s = u(rng) * 60;
      pool.push_back({s, s + 0.5 + u(rng) * 20, 0.01 + u(rng)});
    }
    const auto a = soft_nms(pool, {1e-12, 10, 1e-3});
    const auto b = oracle::hard_nms(pool, 10);
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i)
      same = a[i].start == b[i].start && a[i].end == b[i].end && a[i].score == b[i].score;
    mismatch += !same;
  }
  CHECK(mismatch == 0);
}

TEST_CASE("recall") {
  const std::vector<MomentSpan> gt{{0, 10}, {0, 10}, {0, 10}};
  CHECK(recall_at_k({{{0, 10}}, {{20, 30}}, {{1, 10}}}, gt, 1, 0.5) == doctest::Approx(200.0 / 3.0));
  CHECK(recall_at_k({{{0, 10}}, {{0, 10}}, {{0, 10}}}, gt, 1, 0.7) == 100.0);
  CHECK(recall_at_k({{{20, 30}}, {{20, 30}}, {{20, 30}}}, gt, 5, 0.1) == 0.0);
  CHECK(recall_at_k({{{20, 30}, {0, 9}}, {}, {{20, 30}}}, gt, 2, 0.5) == doctest::Approx(100.0 / 3.0));
  CHECK(recall_at_k({{{20, 30}, {0, 9}}, {}, {{20, 30}}}, gt, 1, 0.5) == 0.0);
  CHECK_THROWS(recall_at_k({{}}, gt, 1, 0.5));
}
