#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "test_util.hpp"
#include "tvu/autodiff.hpp"
#include "tvu/errors.hpp"

using namespace tvu;
using ad::Graph;
using ad::Matrix;
using ad::Var;

TEST_CASE("square at 3: value 9, gradient 6") {
  Graph g;
  Var x = g.leaf("x", 3.0);
  g.set_root(x * x);
  CHECK(g.forward_scalar() == 9.0);
  CHECK(g.backward().at("x")(0, 0) == 6.0);
}

TEST_CASE("arccos at 1 and its derivative at 0.5") {
  Graph g;
  Var s = g.leaf("s", 1.0);
  g.set_root(ad::acos(s));
  CHECK(g.forward_scalar() == 0.0);
  g.forward({{"s", Matrix::Constant(1, 1, 0.5)}});
  // central difference of acos at 0.5, h = 1e-6
  CHECK(g.backward().at("s")(0, 0) == doctest::Approx(-1.1547005382972486).epsilon(1e-9));
}

TEST_CASE("softmax of zeros is uniform and its sum has zero gradient") {
  Graph g;
  Var z = g.leaf("z", Matrix::Zero(1, 3));
  Var sm = ad::softmax_rows(z);
  g.set_root(ad::sum(sm));
  g.forward();
  for (int j = 0; j < 3; ++j) CHECK(sm.value()(0, j) == doctest::Approx(1.0 / 3.0));
  g.forward({{"z", (Matrix(1, 3) << 0.3, -1.2, 2.0).finished()}});
  CHECK(g.backward().at("z").cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("finite differences") {
  const auto fexp = [](const Eigen::VectorXd& x) { return std::exp(x[0]); };
  CHECK(std::abs(ad::finite_diff_gradient(fexp, Eigen::VectorXd::Zero(1), 1e-5)[0] - 1.0) < 1e-8);
  const auto fconst = [](const Eigen::VectorXd&) { return 4.2; };
  CHECK(ad::finite_diff_gradient(fconst, Eigen::VectorXd::Ones(3), 1e-5).isZero());
}

TEST_CASE("errors") {
  SUBCASE("backward before forward") {
    Graph g;
    g.set_root(ad::sum(g.leaf("x", 1.0)));
    CHECK_THROWS_AS(g.backward(), std::logic_error);
  }
  SUBCASE("log of non-positive") {
    Graph g;
    g.set_root(ad::log(g.leaf("x", 0.0)));
    CHECK_THROWS_AS(g.forward(), DomainError);
  }
  SUBCASE("arccos outside [-1, 1]") {
    Graph g;
    g.set_root(ad::acos(g.leaf("x", 1.5)));
    CHECK_THROWS_AS(g.forward(), DomainError);
  }
  SUBCASE("matmul shape mismatch") {
    Graph g;
    Var a = g.leaf("a", Matrix::Ones(2, 3));
    Var b = g.leaf("b", Matrix::Ones(2, 3));
    CHECK_THROWS_AS(ad::matmul(a, b), ShapeError);
  }
}

TEST_CASE("gradient map holds exactly the differentiable leaves") {
  Graph g;
  Var x = g.leaf("x", Matrix::Ones(2, 2));
  Var c = g.leaf("c", Matrix::Ones(2, 2), false);
  g.set_root(ad::sum(x * c));
  g.forward();
  const auto grads = g.backward();
  CHECK(grads.size() == 1);
  CHECK(grads.count("x") == 1);
  CHECK(grads.at("x").rows() == 2);
}

TEST_CASE("forward is bit-deterministic") {
  Graph g;
  Var x = g.leaf("x", test::pattern(3, 4, 0.5));
  g.set_root(ad::sum(ad::layer_norm_rows(ad::gelu(x)) * ad::softmax_rows(x)));
  const double a = g.forward_scalar();
  const double b = g.forward_scalar();
  CHECK(a == b);
}

namespace {

using Builder = std::function<Var(Graph&, Var)>;

// Every op against central differences on a smooth region.
void check_op(const char* name, const Builder& build, Matrix x0, double tol = 1e-7) {
  Graph g;
  Var x = g.leaf("x", x0);
  g.set_root(build(g, x));
  g.forward();
  const Matrix analytic = g.backward().at("x");
  const Matrix numeric = ad::finite_diff_gradient(g, "x", 1e-6);
  INFO(name);
  CHECK(ad::relative_error(analytic, numeric) < tol);
}

}  // namespace

TEST_CASE("per-op gradients match finite differences") {
  const Matrix x = test::pattern(3, 4, 0.4);        // entries in (-1, 1)
  const Matrix pos = x.array().abs() + 0.5;         // strictly positive
  const Matrix unit = 0.9 * x;                      // strictly inside (-1, 1)
  const Matrix w = test::pattern(4, 2, 1.7);
  check_op("add", [](Graph& g, Var v) { return ad::sum(v + g.constant(test::pattern(3, 4, 2.0)) * v); }, x);
  check_op("sub/neg", [](Graph&, Var v) { return ad::sum(-(v - 2.0 * v * v)); }, x);
  check_op("div", [](Graph& g, Var v) { return ad::sum(g.constant(1.0) / v + v / (v + 3.0)); }, pos);
  check_op("matmul", [&](Graph& g, Var v) { return ad::sum(ad::square(ad::matmul(v, g.constant(w)))); }, x);
  check_op("transpose", [&](Graph& g, Var v) { return ad::sum(ad::square(ad::matmul(ad::transpose(v), g.constant(test::pattern(3, 2, 0.1))))); }, x);
  check_op("exp/log", [](Graph&, Var v) { return ad::sum(ad::exp(v) + ad::log(v)); }, pos);
  check_op("sqrt/pow", [](Graph&, Var v) { return ad::sum(ad::sqrt(v) + ad::pow(v, 2.5)); }, pos);
  check_op("cos/acos", [](Graph&, Var v) { return ad::sum(ad::cos(v) * ad::acos(v)); }, unit);
  check_op("max/min", [](Graph& g, Var v) {
    Var c = g.constant(Matrix::Constant(3, 4, 0.05));
    return ad::sum(ad::maximum(v, c) + 2.0 * ad::minimum(v, c));
  }, x);
  check_op("clamp", [](Graph&, Var v) { return ad::sum(ad::square(ad::clamp(v, -0.5, 0.6))); }, x);
  check_op("softmax", [&](Graph& g, Var v) { return ad::sum(ad::softmax_rows(v) * g.constant(test::pattern(3, 4, 3.0))); }, x);
  check_op("log-softmax", [&](Graph& g, Var v) { return ad::sum(ad::log_softmax_rows(v) * g.constant(test::pattern(3, 4, 3.0))); }, x);
  check_op("logsumexp", [](Graph&, Var v) { return ad::sum(ad::square(ad::logsumexp_rows(v))); }, x);
  check_op("layer-norm", [&](Graph& g, Var v) { return ad::sum(ad::layer_norm_rows(v) * g.constant(test::pattern(3, 4, 1.0))); }, x);
  check_op("gelu/relu", [](Graph&, Var v) { return ad::sum(ad::gelu(v) + ad::relu(v) * v); }, x);
  check_op("sigmoid/softplus/tanh", [](Graph&, Var v) { return ad::sum(ad::sigmoid(v) * ad::softplus(v) + ad::tanh(v)); }, x);
  check_op("mean/row-sum/dot", [](Graph&, Var v) { return ad::mean(ad::square(ad::row_sum(v))) + ad::dot(v, v); }, x);
  check_op("block/row/col/element", [](Graph&, Var v) {
    return ad::sum(ad::square(ad::block(v, 1, 1, 2, 2))) + ad::sum(ad::row(v, 0) * ad::row(v, 2)) +
           ad::sum(ad::col(v, 3)) * ad::element(v, 0, 0);
  }, x);
  check_op("hcat/vcat", [](Graph&, Var v) {
    return ad::sum(ad::square(ad::hcat({v, ad::exp(v)}))) + ad::sum(ad::cos(ad::vcat({v, v * v})));
  }, x);
  check_op("broadcasts", [](Graph& g, Var v) {
    Var r = g.constant(test::pattern(1, 4, 0.2));
    Var c = g.constant(test::pattern(3, 1, 0.8));
    return ad::sum(ad::square(ad::mul_col_broadcast(ad::add_row_broadcast(v, r), c)));
  }, x);
  check_op("scalar broadcast", [](Graph&, Var v) {
    Var s = ad::element(v, 1, 1);
    return ad::sum(ad::square(v * s + s));
  }, x);
  check_op("select_le", [](Graph&, Var v) { return ad::sum(ad::select_le(v, 0.1, ad::square(v), ad::exp(v))); }, x);
  check_op("causal conv", [&](Graph& g, Var v) {
    Var sig = g.constant(test::pattern(6, 3, 0.3));
    return ad::sum(ad::square(ad::causal_conv(ad::block(v, 0, 0, 3, 4), sig)));
  }, x);
  check_op("gather/permute", [](Graph&, Var v) {
    return ad::sum(ad::square(ad::gather_rows(v, {2, 2, 0}))) + ad::sum(ad::permute_rows(v, {1, 2, 0}) * v);
  }, x);
}

TEST_CASE("subgradient conventions at kinks") {
  Graph g;
  Var x = g.leaf("x", Matrix::Zero(1, 1));
  Var y = g.leaf("y", Matrix::Zero(1, 1));
  g.set_root(ad::relu(x) + ad::maximum(x, y) + 2.0 * ad::minimum(x, y) + 4.0 * ad::clamp(x, 0.0, 1.0));
  g.forward();
  const auto grads = g.backward();
  // relu'(0) = 1; max tie -> first operand; min tie -> second; clamp passes at lo
  CHECK(grads.at("x")(0, 0) == 1.0 + 1.0 + 4.0);
  CHECK(grads.at("y")(0, 0) == 2.0);
}

TEST_CASE("permute_rows rejects non-permutations") {
  Graph g;
  Var x = g.leaf("x", Matrix::Ones(3, 2));
  CHECK_THROWS(ad::permute_rows(x, {0, 0, 1}));
  CHECK_THROWS(ad::permute_rows(x, {0, 1}));
}
