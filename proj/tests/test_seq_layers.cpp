#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "test_util.hpp"
#include "tvu/fft.hpp"
#include "tvu/oracles.hpp"
#include "tvu/seq_layers.hpp"

using namespace tvu;

namespace {

SSLParams scalar_ssl(double lambda, double c, double delta) {
  SSLParams p;
  p.lambda = Eigen::VectorXd::Constant(1, lambda);
  p.c_out = Eigen::MatrixXd::Constant(1, 1, c);
  p.delta = delta;
  return p;
}

}  // namespace

TEST_CASE("kernel closed form") {
  const Eigen::MatrixXd k = ssm_kernel(scalar_ssl(-1.0, 1.0, 1.0), 3);
  CHECK(std::abs(k(0, 0) - 0.632121) <= 1e-6);
  CHECK(std::abs(k(0, 1) - 0.232544) <= 1e-6);
  CHECK(std::abs(k(0, 2) - 0.085548) <= 1e-6);

  SSLParams two;
  two.lambda = (Eigen::VectorXd(2) << -0.5, -2.0).finished();
  two.c_out = (Eigen::MatrixXd(2, 2) << 1.0, 0.5, -0.25, 2.0).finished();
  two.delta = 0.7;
  const std::vector<double> ref{0.4964484410552739, 0.3929822091900593, 0.2875682986349158, 0.20526935620109846,
                                1.04871494633968,   0.39388968724369244, 0.19246204048499443, 0.11463849827354369};
  const Eigen::MatrixXd k2 = ssm_kernel(two, 4);
  for (int ch = 0; ch < 2; ++ch)
    for (int j = 0; j < 4; ++j) CHECK(k2(ch, j) == doctest::Approx(ref[std::size_t(ch * 4 + j)]).epsilon(1e-13));

  const Eigen::MatrixXd fast = ssm_kernel(scalar_ssl(-80.0, 1.0, 1.0), 4);
  CHECK(fast(0, 0) == doctest::Approx(1.0 / 80.0));
  CHECK(fast.rightCols(3).cwiseAbs().maxCoeff() < 1e-30);
  CHECK(ssm_kernel(scalar_ssl(-1.0, 0.0, 1.0), 5).isZero());
}

TEST_CASE("long kernel tail is flushed to zero") {
  const Eigen::MatrixXd k = ssm_kernel(scalar_ssl(-1.0, 1.0, 1.0), 2000);
  const double e = std::exp(-1.0) - 1.0;
  for (Eigen::Index j = 0; j < 2000; ++j) {
    if (j > 708) CHECK(k(0, j) == 0.0);
    CHECK(std::abs(k(0, j) - (-e) * std::exp(-static_cast<double>(j))) < 1e-300);
  }
}

TEST_CASE("kernel is a float template") {
  const Eigen::VectorXf lam = Eigen::VectorXf::Constant(1, -1.0f);
  const Eigen::MatrixXf c = Eigen::MatrixXf::Ones(1, 1);
  const Eigen::MatrixXf k = ssm_kernel<float>(lam, c, 1.0f, 3);
  CHECK(k(0, 1) == doctest::Approx(0.232544).epsilon(1e-5));
}

TEST_CASE("stability and shape errors") {
  CHECK_THROWS_AS(ssm_kernel(scalar_ssl(0.5, 1.0, 1.0), 4), DomainError);
  SSLParams unstable = scalar_ssl(0.5, 1.0, 1.0);
  unstable.allow_unstable = true;
  CHECK_NOTHROW(ssm_kernel(unstable, 4));
  CHECK_THROWS_AS(ssm_kernel(scalar_ssl(-1.0, 1.0, 0.0), 4), PreconditionError);
  CHECK_THROWS_AS(ssm_kernel(scalar_ssl(-1.0, 1.0, 1.0), 0), PreconditionError);
}

TEST_CASE("recurrence identities") {
  std::mt19937_64 rng(4);
  const SSLParams p = SSLParams::log_spaced(6, 2, 0.5, rng);
  Eigen::MatrixXd impulse = Eigen::MatrixXd::Zero(10, 2);
  impulse.row(0).setOnes();
  CHECK(test::max_abs_diff(ssm_recurrence(p, impulse), ssm_kernel(p, 10).transpose()) < 1e-14);
  CHECK(ssm_recurrence(p, Eigen::MatrixXd::Zero(7, 2)).isZero());
  const Eigen::MatrixXd x = test::pattern(64, 2, 0.2);
  CHECK(test::max_abs_diff(ssm_recurrence(p, x), ssm_apply_fft(p, x)) < 1e-10);
}

TEST_CASE("log-spaced initialisation") {
  std::mt19937_64 rng(1);
  const SSLParams p = SSLParams::log_spaced(5, 3, 1.0, rng);
  CHECK(p.lambda[0] == doctest::Approx(-1.0));
  CHECK(p.lambda[4] == doctest::Approx(-0.01));
  CHECK(p.c_out.rows() == 5);
  CHECK(p.c_out.cols() == 3);
}

TEST_CASE("fft convolution") {
  const Eigen::VectorXd x = test::pattern(9, 1, 0.4);
  Eigen::VectorXd delta_k = Eigen::VectorXd::Zero(9);
  delta_k[0] = 1.0;
  CHECK(test::max_abs_diff(fft_convolve(delta_k, x), x) < 1e-14);
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(9);
  shift[1] = 1.0;
  const Eigen::VectorXd y = fft_convolve(shift, x);
  CHECK(std::abs(y[0]) < 1e-15);
  CHECK(test::max_abs_diff(y.tail(8), x.head(8)) < 1e-14);

  const Eigen::VectorXd k = test::pattern(257, 1, 1.9);
  const Eigen::VectorXd s = test::pattern(257, 1, -0.3);
  CHECK(test::max_abs_diff(fft_convolve(k, s), oracle::direct_convolve(k, s)) < 1e-10);
  CHECK(fft_convolve(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 2.5))[0] == doctest::Approx(2.5));
}

TEST_CASE("gated SSL forward") {
  std::mt19937_64 rng(21);
  const GatingParams gp = GatingParams::random(8, 4, 6, rng);
  const SSLParams ssl = SSLParams::log_spaced(5, 4, 1.0, rng);
  const Eigen::MatrixXd x = test::pattern(16, 8, 0.9);
  const Eigen::MatrixXd h = gated_ssl_forward(x, gp, ssl, SsmPath::Fft);
  CHECK(h.rows() == 16);
  CHECK(h.cols() == 6);
  CHECK(test::max_abs_diff(h, gated_ssl_forward(x, gp, ssl, SsmPath::Recurrence)) < 1e-10);
  CHECK(gated_ssl_forward(Eigen::MatrixXd::Zero(16, 8), gp, ssl).isZero());

  // V pinned to ones and an identity output map leave Lin(SSM(U))
  const auto gelu = [](double v) { return 0.5 * v * std::erfc(-v / std::sqrt(2.0)); };
  double lo = 0.0, hi = 3.0;
  for (int it = 0; it < 200; ++it) (gelu(0.5 * (lo + hi)) < 1.0 ? lo : hi) = 0.5 * (lo + hi);
  GatingParams pinned = gp;
  pinned.w_v.setZero();
  pinned.b_v.setConstant(lo);
  pinned.w_h = Eigen::MatrixXd::Identity(4, 4);
  pinned.b_h = Eigen::RowVectorXd::Zero(4);
  const Eigen::MatrixXd u = ((x * gp.w_u).rowwise() + gp.b_u).unaryExpr(gelu);
  const Eigen::MatrixXd expected = (ssm_recurrence(ssl, u) * gp.w_o).rowwise() + gp.b_o;
  CHECK(test::max_abs_diff(gated_ssl_forward(x, pinned, ssl), expected) < 1e-12);

  CHECK_THROWS_AS(gated_ssl_forward(test::pattern(4, 7, 0.0), gp, ssl), ShapeError);
}

TEST_CASE("gated SSL gradients") {
  std::mt19937_64 rng(8);
  const GatingParams gp = GatingParams::random(5, 3, 4, rng);
  const SSLParams ssl = SSLParams::log_spaced(4, 3, 0.8, rng);
  ad::Graph g;
  ad::Var x = g.leaf("x", test::pattern(12, 5, 0.3));
  const auto gv = graph::gating_leaves(g, gp);
  const auto sv = graph::ssl_leaves(g, ssl);
  ad::Var h = graph::gated_ssl_forward(x, gv, sv);
  g.set_root(ad::sum(ad::square(h)));
  g.forward();
  CHECK(test::max_abs_diff(h.value(), gated_ssl_forward(test::pattern(12, 5, 0.3), gp, ssl)) < 1e-12);
  const auto grads = g.backward();
  for (const auto& [name, grad] : grads) {
    INFO(name);
    CHECK(ad::relative_error(grad, ad::finite_diff_gradient(g, name, 1e-6)) < 1e-5);
  }
}

TEST_CASE("adapter") {
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd o = test::pattern(8, 16, 0.1), p = test::pattern(8, 16, 1.4);
  const AdapterParams zero = AdapterParams::zero_init(16, 4, rng);
  CHECK((recurrent_adapter(o, p, zero) - layer_norm_rows(o + p)).cwiseAbs().maxCoeff() <= 1e-12);

  // k = d, identity projections, silent RNN: the residual branch contributes GELU(0) = 0
  AdapterParams ident = AdapterParams::zero_init(16, 16, rng);
  ident.w_down = 0.5 * Eigen::MatrixXd::Identity(16, 16);
  ident.w_up = Eigen::MatrixXd::Identity(16, 16);
  CHECK((recurrent_adapter(o, p, ident) - layer_norm_rows(o + p)).cwiseAbs().maxCoeff() <= 1e-12);

  // layer norm rows: zero mean, unit variance up to eps
  const Eigen::MatrixXd ln = layer_norm_rows(o);
  CHECK(ln.rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(((ln.array().square().rowwise().mean()) - 1.0).abs().maxCoeff() < 1e-3);

  const AdapterParams ap = AdapterParams::random(16, 4, rng);
  ad::Graph g;
  ad::Var ov = g.leaf("o", o);
  ad::Var pv = g.leaf("p", p);
  ad::Var h = graph::recurrent_adapter(ov, pv, graph::adapter_leaves(g, ap));
  g.set_root(ad::sum(h * g.constant(test::pattern(8, 16, 2.2))));
  g.forward();
  CHECK(h.value().allFinite());
  CHECK(test::max_abs_diff(h.value(), recurrent_adapter(o, p, ap)) < 1e-12);
  for (const auto& [name, grad] : g.backward()) {
    INFO(name);
    CHECK(ad::relative_error(grad, ad::finite_diff_gradient(g, name, 1e-6)) < 1e-5);
  }
  CHECK_THROWS_AS(recurrent_adapter(o, p.leftCols(15), ap), ShapeError);
}

TEST_CASE("gumbel top-k") {
  const Eigen::RowVectorXd q = test::pattern(1, 6, 0.5);
  const Eigen::MatrixXd keys = test::pattern(10, 6, 1.1);
  const auto a = gumbel_topk_select(q, keys, 4, 0.1, 99);
  CHECK(a == gumbel_topk_select(q, keys, 4, 0.1, 99));
  CHECK(a.size() == 4);
  std::vector<Eigen::Index> all = gumbel_topk_select(q, keys, 10, 1.0, 3);
  std::sort(all.begin(), all.end());
  for (Eigen::Index i = 0; i < 10; ++i) CHECK(all[std::size_t(i)] == i);

  // zero temperature: plain top-k by score
  const Eigen::VectorXd scores = keys * q.transpose();
  std::vector<Eigen::Index> order(10);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return scores[l] > scores[r]; });
  order.resize(3);
  CHECK(gumbel_topk_select(q, keys, 3, 0.0, 5) == order);
  CHECK_THROWS_AS(gumbel_topk_select(q, keys, 11, 1.0, 0), PreconditionError);
}
