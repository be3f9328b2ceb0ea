#include "tvu/seq_layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tvu/fft.hpp"

namespace tvu {
namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Eigen::MatrixXd uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

double gelu(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

Eigen::MatrixXd gelu(const Eigen::MatrixXd& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

void require_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

}  // namespace

SSLParams SSLParams::log_spaced(Eigen::Index state_size, Eigen::Index channels, double delta, std::mt19937_64& rng) {
  if (state_size < 1 || channels < 1) throw PreconditionError("SSLParams: sizes must be positive");
  SSLParams p;
  p.lambda.resize(state_size);
  const double lo = std::log(0.01), hi = std::log(1.0);
  for (Eigen::Index i = 0; i < state_size; ++i) {
    const double t = state_size == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(state_size - 1);
    p.lambda[i] = -std::exp(hi + t * (lo - hi));
  }
  p.c_out = gaussian(state_size, channels, 1.0 / std::sqrt(static_cast<double>(state_size)), rng);
  p.delta = delta;
  return p;
}

void SSLParams::validate() const {
  if (!(delta > 0.0)) throw PreconditionError("SSLParams: delta must be positive");
  if (lambda.size() == 0) throw PreconditionError("SSLParams: empty state");
  if (c_out.rows() != lambda.size()) throw ShapeError("SSLParams: c_out rows must equal the state size");
  if (!allow_unstable && (lambda.array() >= 0.0).any()) {
    throw DomainError("SSLParams: unstable rate (lambda >= 0)");
  }
  if ((lambda.array() == 0.0).any()) throw DomainError("SSLParams: lambda = 0 has no discretisation");
}

Eigen::MatrixXd ssm_kernel(const SSLParams& params, Eigen::Index length) {
  params.validate();
  return ssm_kernel<double>(params.lambda, params.c_out, params.delta, length);
}

Eigen::MatrixXd ssm_recurrence(const SSLParams& params, const Eigen::MatrixXd& x) {
  params.validate();
  if (x.cols() != params.channels()) throw ShapeError("ssm_recurrence: signal channels differ from c_out columns");
  const Eigen::ArrayXd a_bar = (params.lambda.array() * params.delta).exp();
  const Eigen::ArrayXd b_bar = (a_bar - 1.0) / params.lambda.array();
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::ArrayXd g = Eigen::ArrayXd::Zero(params.state_size());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      g = a_bar * g + b_bar * x(t, c);
      out(t, c) = (params.c_out.col(c).array() * g).sum();
    }
  }
  return out;
}

Eigen::MatrixXd ssm_apply_fft(const SSLParams& params, const Eigen::MatrixXd& x) {
  if (x.cols() != params.channels()) throw ShapeError("ssm_apply_fft: signal channels differ from c_out columns");
  return fft_convolve_columns(ssm_kernel(params, x.rows()), x);
}

GatingParams GatingParams::random(Eigen::Index d, Eigen::Index g, Eigen::Index d_h, std::mt19937_64& rng) {
  auto glorot = [&](Eigen::Index in, Eigen::Index out) {
    return uniform(in, out, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
  };
  GatingParams p;
  p.w_u = glorot(d, g);
  p.w_v = glorot(d, g);
  p.w_o = glorot(g, g);
  p.w_h = glorot(g, d_h);
  p.b_u = Eigen::RowVectorXd::Zero(g);
  p.b_v = Eigen::RowVectorXd::Zero(g);
  p.b_o = Eigen::RowVectorXd::Zero(g);
  p.b_h = Eigen::RowVectorXd::Zero(d_h);
  return p;
}

void GatingParams::validate() const {
  const Eigen::Index d = input_dim(), g = gating_dim(), h = output_dim();
  require_shape(w_v, d, g, "GatingParams.w_v");
  require_shape(w_o, g, g, "GatingParams.w_o");
  require_shape(w_h, g, h, "GatingParams.w_h");
  require_shape(b_u, 1, g, "GatingParams.b_u");
  require_shape(b_v, 1, g, "GatingParams.b_v");
  require_shape(b_o, 1, g, "GatingParams.b_o");
  require_shape(b_h, 1, h, "GatingParams.b_h");
}

Eigen::MatrixXd gated_ssl_forward(const Eigen::MatrixXd& x, const GatingParams& gp, const SSLParams& ssl,
                                  SsmPath path) {
  gp.validate();
  if (x.cols() != gp.input_dim()) throw ShapeError("gated_ssl_forward: X width differs from W_u rows");
  if (ssl.channels() != gp.gating_dim()) throw ShapeError("gated_ssl_forward: SSM channels differ from d_gating");
  const Eigen::MatrixXd u = gelu((x * gp.w_u).rowwise() + gp.b_u);
  const Eigen::MatrixXd v = gelu((x * gp.w_v).rowwise() + gp.b_v);
  const Eigen::MatrixXd s = path == SsmPath::Fft ? ssm_apply_fft(ssl, u) : ssm_recurrence(ssl, u);
  const Eigen::MatrixXd o = (s * gp.w_o).rowwise() + gp.b_o;
  return (o.cwiseProduct(v) * gp.w_h).rowwise() + gp.b_h;
}

AdapterParams AdapterParams::zero_init(Eigen::Index d, Eigen::Index k, std::mt19937_64& rng) {
  if (d < 1 || k < 1) throw PreconditionError("AdapterParams: sizes must be positive");
  AdapterParams p;
  p.w_down = gaussian(d, k, std::sqrt(2.0 / static_cast<double>(d)), rng);
  p.w_up = Eigen::MatrixXd::Zero(k, d);
  p.w_x = Eigen::MatrixXd::Zero(k, k);
  p.w_h = Eigen::MatrixXd::Zero(k, k);
  p.b = Eigen::RowVectorXd::Zero(k);
  return p;
}

AdapterParams AdapterParams::random(Eigen::Index d, Eigen::Index k, std::mt19937_64& rng) {
  AdapterParams p = zero_init(d, k, rng);
  p.w_up = gaussian(k, d, 1.0 / std::sqrt(static_cast<double>(k)), rng);
  p.w_x = gaussian(k, k, 1.0 / std::sqrt(static_cast<double>(k)), rng);
  p.w_h = gaussian(k, k, 0.5 / std::sqrt(static_cast<double>(k)), rng);
  p.b = gaussian(1, k, 0.1, rng);
  return p;
}

void AdapterParams::validate(Eigen::Index d) const {
  const Eigen::Index k = w_down.cols();
  require_shape(w_down, d, k, "AdapterParams.w_down");
  require_shape(w_up, k, d, "AdapterParams.w_up");
  require_shape(w_x, k, k, "AdapterParams.w_x");
  require_shape(w_h, k, k, "AdapterParams.w_h");
  require_shape(b, 1, k, "AdapterParams.b");
}

Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& x, double eps) {
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const Eigen::RowVectorXd centered = x.row(i).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(x.cols());
    y.row(i) = centered / std::sqrt(var + eps);
  }
  return y;
}

Eigen::MatrixXd recurrent_adapter(const Eigen::MatrixXd& o, const Eigen::MatrixXd& p, const AdapterParams& ap) {
  if (o.rows() != p.rows() || o.cols() != p.cols()) throw ShapeError("recurrent_adapter: O and P shapes differ");
  ap.validate(o.cols());
  const Eigen::MatrixXd z = o * ap.w_down;
  Eigen::MatrixXd h(z.rows(), z.cols());
  Eigen::RowVectorXd prev = Eigen::RowVectorXd::Zero(z.cols());
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    prev = (z.row(t) * ap.w_x + prev * ap.w_h + ap.b).array().tanh();
    h.row(t) = prev;
  }
  return layer_norm_rows(o + gelu(h) * ap.w_up + p);
}

std::vector<Eigen::Index> gumbel_topk_select(const Eigen::RowVectorXd& query, const Eigen::MatrixXd& keys,
                                             Eigen::Index k, double temperature, std::uint64_t seed) {
  if (query.size() != keys.cols()) throw ShapeError("gumbel_topk_select: query and key widths differ");
  if (k < 1 || k > keys.rows()) throw PreconditionError("gumbel_topk_select: need 1 <= k <= N");
  if (!(temperature >= 0.0)) throw PreconditionError("gumbel_topk_select: temperature must be nonnegative");
  Eigen::VectorXd logits = keys * query.transpose() / std::sqrt(static_cast<double>(keys.cols()));
  Eigen::ArrayXd scores = (logits.array() - logits.maxCoeff()).exp();
  scores /= scores.sum();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    scores[i] += temperature * -std::log(-std::log(u));
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

namespace graph {

SSLVars ssl_leaves(ad::Graph& g, const SSLParams& p, const std::string& prefix) {
  p.validate();
  return {g.leaf(prefix + "lambda", Eigen::MatrixXd(p.lambda)), g.leaf(prefix + "c_out", p.c_out), p.delta};
}

GatingVars gating_leaves(ad::Graph& g, const GatingParams& p, const std::string& prefix) {
  p.validate();
  return {g.leaf(prefix + "w_u", p.w_u), g.leaf(prefix + "b_u", Eigen::MatrixXd(p.b_u)),
          g.leaf(prefix + "w_v", p.w_v), g.leaf(prefix + "b_v", Eigen::MatrixXd(p.b_v)),
          g.leaf(prefix + "w_o", p.w_o), g.leaf(prefix + "b_o", Eigen::MatrixXd(p.b_o)),
          g.leaf(prefix + "w_h", p.w_h), g.leaf(prefix + "b_h", Eigen::MatrixXd(p.b_h))};
}

AdapterVars adapter_leaves(ad::Graph& g, const AdapterParams& p, const std::string& prefix) {
  return {g.leaf(prefix + "w_down", p.w_down), g.leaf(prefix + "w_up", p.w_up), g.leaf(prefix + "w_x", p.w_x),
          g.leaf(prefix + "w_h", p.w_h), g.leaf(prefix + "b", Eigen::MatrixXd(p.b))};
}

ad::Var ssm_kernel(const SSLVars& ssl, Eigen::Index length) {
  if (length < 1) throw PreconditionError("ssm_kernel: length must be >= 1");
  ad::Graph& g = *ssl.lambda.graph();
  Eigen::MatrixXd steps(1, length);
  for (Eigen::Index j = 0; j < length; ++j) steps(0, j) = static_cast<double>(j) * ssl.delta;
  ad::Var e = (ad::exp(ssl.lambda * ssl.delta) - 1.0) / ssl.lambda;
  ad::Var p = ad::exp(ad::matmul(ssl.lambda, g.constant(steps)));
  return ad::matmul(ad::transpose(ad::mul_col_broadcast(ssl.c_out, e)), p);
}

ad::Var gated_ssl_forward(ad::Var x, const GatingVars& gp, const SSLVars& ssl) {
  ad::Var u = ad::gelu(ad::add_row_broadcast(ad::matmul(x, gp.w_u), gp.b_u));
  ad::Var v = ad::gelu(ad::add_row_broadcast(ad::matmul(x, gp.w_v), gp.b_v));
  ad::Var s = ad::causal_conv(ssm_kernel(ssl, x.rows()), u);
  ad::Var o = ad::add_row_broadcast(ad::matmul(s, gp.w_o), gp.b_o);
  return ad::add_row_broadcast(ad::matmul(o * v, gp.w_h), gp.b_h);
}

ad::Var recurrent_adapter(ad::Var o, ad::Var p, const AdapterVars& ap) {
  ad::Var z = ad::matmul(o, ap.w_down);
  std::vector<ad::Var> states;
  ad::Var prev;
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    ad::Var pre = ad::add_row_broadcast(ad::matmul(ad::row(z, t), ap.w_x), ap.b);
    if (prev.valid()) pre = pre + ad::matmul(prev, ap.w_h);
    prev = ad::tanh(pre);
    states.push_back(prev);
  }
  ad::Var h = ad::vcat(states);
  return ad::layer_norm_rows(o + ad::matmul(ad::gelu(h), ap.w_up) + p, kLayerNormEps);
}

}  // namespace graph
}  // namespace tvu
