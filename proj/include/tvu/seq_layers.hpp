#pragma once

// Sequence layers: a diagonal state-space layer (closed-form kernel, FFT
// application and the exact recurrence), the gating unit around it, the
// recurrent residual adapter, and Gumbel-perturbed top-k selection.

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tvu/autodiff.hpp"
#include "tvu/errors.hpp"

namespace tvu {

/// Per-channel SISO diagonal system: every channel c shares the rates lambda and
/// reads its d_S states out through column c of c_out.
struct SSLParams {
  Eigen::VectorXd lambda;  // d_S rates, negative for stability
  Eigen::MatrixXd c_out;   // d_S x channels
  double delta = 1.0;
  bool allow_unstable = false;

  Eigen::Index state_size() const { return lambda.size(); }
  Eigen::Index channels() const { return c_out.cols(); }

  /// lambda log-spaced over [-1, -0.01], c_out ~ N(0, 1/d_S).
  static SSLParams log_spaced(Eigen::Index state_size, Eigen::Index channels, double delta, std::mt19937_64& rng);

  void validate() const;
};

/// K[c, j] = sum_i C[i, c] E_i exp(lambda_i j delta), E_i = (exp(lambda_i delta) - 1) / lambda_i.
/// Returns channels x length.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> ssm_kernel(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& lambda,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& c_out, Scalar delta, Eigen::Index length) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (length < 1) throw PreconditionError("ssm_kernel: length must be >= 1");
  if (c_out.rows() != lambda.size()) throw ShapeError("ssm_kernel: c_out rows must equal the state size");
  const auto e = ((lambda.array() * delta).exp() - Scalar(1)) / lambda.array();
  // Powers below the smallest normal are flushed to zero: subnormal operands
  // make exp and the product below orders of magnitude slower on long kernels.
  const Scalar floor = std::log(std::numeric_limits<Scalar>::min());
  Mat p(lambda.size(), length);
  for (Eigen::Index j = 0; j < length; ++j) {
    const auto x = (lambda.array() * (delta * Scalar(j))).eval();
    p.col(j) = (x < floor).select(Scalar(0), x.exp()).matrix();
  }
  return (e.matrix().asDiagonal() * c_out).transpose() * p;
}

Eigen::MatrixXd ssm_kernel(const SSLParams& params, Eigen::Index length);

/// Exact state recurrence g_t = A g_{t-1} + B x_t, o_t = C g_t with g_{-1} = 0.
/// x is L x channels.
Eigen::MatrixXd ssm_recurrence(const SSLParams& params, const Eigen::MatrixXd& x);

/// Same map through the kernel and FFT convolution.
Eigen::MatrixXd ssm_apply_fft(const SSLParams& params, const Eigen::MatrixXd& x);

enum class SsmPath { Fft, Recurrence };

struct GatingParams {
  Eigen::MatrixXd w_u, w_v;  // d x g
  Eigen::RowVectorXd b_u, b_v;
  Eigen::MatrixXd w_o;  // g x g
  Eigen::RowVectorXd b_o;
  Eigen::MatrixXd w_h;  // g x d_h
  Eigen::RowVectorXd b_h;

  Eigen::Index input_dim() const { return w_u.rows(); }
  Eigen::Index gating_dim() const { return w_u.cols(); }
  Eigen::Index output_dim() const { return w_h.cols(); }

  /// Glorot-uniform weights, zero biases.
  static GatingParams random(Eigen::Index d, Eigen::Index d_gating, Eigen::Index d_h, std::mt19937_64& rng);

  void validate() const;
};

/// U = gelu(X W_u + b_u), V = gelu(X W_v + b_v), O = SSM(U) W_o + b_o, H = (O .* V) W_h + b_h.
Eigen::MatrixXd gated_ssl_forward(const Eigen::MatrixXd& x, const GatingParams& gating, const SSLParams& ssl,
                                  SsmPath path = SsmPath::Fft);

struct AdapterParams {
  Eigen::MatrixXd w_down;  // d x k
  Eigen::MatrixXd w_up;    // k x d
  Eigen::MatrixXd w_x;     // k x k, input-to-hidden
  Eigen::MatrixXd w_h;     // k x k, hidden-to-hidden
  Eigen::RowVectorXd b;

  /// W_down ~ N(0, 2/d); W_up and every RNN weight zero.
  static AdapterParams zero_init(Eigen::Index d, Eigen::Index k, std::mt19937_64& rng);
  /// Every parameter random (for gradient checks).
  static AdapterParams random(Eigen::Index d, Eigen::Index k, std::mt19937_64& rng);

  void validate(Eigen::Index d) const;
};

inline constexpr double kLayerNormEps = 1e-5;

Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& x, double eps = kLayerNormEps);

/// H = LN(O + gelu(RNN(O W_down)) W_up + P), RNN h_t = tanh(z_t W_x + h_{t-1} W_h + b).
Eigen::MatrixXd recurrent_adapter(const Eigen::MatrixXd& o, const Eigen::MatrixXd& p, const AdapterParams& params);

/// Indices of the k largest softmax(q K' / sqrt(d)) + temperature * Gumbel(0,1) scores,
/// ordered by decreasing perturbed score (ties to the lower index).
std::vector<Eigen::Index> gumbel_topk_select(const Eigen::RowVectorXd& query, const Eigen::MatrixXd& keys,
                                             Eigen::Index k, double temperature, std::uint64_t seed);

namespace graph {

struct SSLVars {
  ad::Var lambda;  // d_S x 1
  ad::Var c_out;   // d_S x channels
  double delta = 1.0;
};

struct GatingVars {
  ad::Var w_u, b_u, w_v, b_v, w_o, b_o, w_h, b_h;
};

struct AdapterVars {
  ad::Var w_down, w_up, w_x, w_h, b;
};

/// Leaves named prefix + field for every parameter.
SSLVars ssl_leaves(ad::Graph& g, const SSLParams& p, const std::string& prefix = "ssl.");
GatingVars gating_leaves(ad::Graph& g, const GatingParams& p, const std::string& prefix = "gate.");
AdapterVars adapter_leaves(ad::Graph& g, const AdapterParams& p, const std::string& prefix = "adapter.");

/// channels x length kernel as a graph expression of lambda and c_out.
ad::Var ssm_kernel(const SSLVars& ssl, Eigen::Index length);
ad::Var gated_ssl_forward(ad::Var x, const GatingVars& gating, const SSLVars& ssl);
ad::Var recurrent_adapter(ad::Var o, ad::Var p, const AdapterVars& params);

}  // namespace graph
}  // namespace tvu
