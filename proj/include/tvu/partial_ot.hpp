#pragma once

// Partial optimal transport between two feature sequences.
//
// The solver follows the clipped Sinkhorn scheme: start from the Gibbs kernel
// exp(-C/tau) rescaled to total mass s, then alternate row clipping, column
// clipping and mass renormalisation. The sequence distance sweeps the
// transported mass over s = 1..min(N_a, N_b) and keeps the cheapest plan.

#include <Eigen/Core>
#include <vector>

#include "tvu/errors.hpp"

namespace tvu {

using CostMatrix = Eigen::MatrixXd;

/// Weighted point cloud: one support row per point.
struct DiscreteDistribution {
  Eigen::MatrixXd support;
  Eigen::VectorXd weights;

  /// One unit of mass per support point.
  static DiscreteDistribution unit(const Eigen::MatrixXd& support);
  /// Mass 1/N per support point.
  static DiscreteDistribution normalized(const Eigen::MatrixXd& support);

  void validate() const;
};

struct TransportPlan {
  Eigen::MatrixXd coupling;
  double mass = 0.0;
  double cost = 0.0;  // sum_ij T_ij C_ij
  int iterations = 0;
};

struct SinkhornOptions {
  double tau = 0.05;
  int max_iter = 1000;
  /// Early exit once successive plans differ by less than this in max-norm.
  double tol = 1e-9;
  /// Below this temperature the iteration runs on log-plans.
  double log_domain_below = 0.02;
  /// Carry Dykstra corrections through the row and column clips. The plain
  /// scheme can stall at a fixed point above the entropic optimum; with the
  /// corrections the iteration converges to it. Always runs on log-plans.
  bool dykstra = false;
};

enum class MassMode {
  Unit,        // a = 1, s in {1, ..., min(N_a, N_b)}
  Normalized,  // a = 1/N, s in {k / min(N_a, N_b)} so that s <= 1
};

/// C_ij = 1 - <a_i, b_j> / (|a_i| |b_j|), entries in [0, 2].
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> cosine_cost(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.cols() != b.cols()) throw ShapeError("cosine_cost: feature dimensions differ");
  const auto na = a.rowwise().norm().eval();
  const auto nb = b.rowwise().norm().eval();
  if ((na.array() == Scalar(0)).any() || (nb.array() == Scalar(0)).any()) {
    throw PreconditionError("cosine_cost: zero feature row");
  }
  Mat sim = na.cwiseInverse().asDiagonal() * (a * b.transpose()) * nb.cwiseInverse().asDiagonal();
  return (Mat::Ones(a.rows(), b.rows()) - sim).cwiseMax(Scalar(0)).cwiseMin(Scalar(2));
}

/// Clipped Sinkhorn iteration at fixed mass s.
TransportPlan sinkhorn_partial(const CostMatrix& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double s,
                               const SinkhornOptions& options = {});

struct MassSweep {
  double distance = 0.0;             // min over per_mass_cost
  std::vector<double> masses;        // swept s values
  std::vector<double> per_mass_cost; // sinkhorn cost at each s
  std::size_t best = 0;              // index of the minimiser (first on ties)
};

MassSweep pvla_sweep(const CostMatrix& cost, const SinkhornOptions& options = {}, MassMode mode = MassMode::Unit);
MassSweep pvla_sweep(const Eigen::MatrixXd& h_a, const Eigen::MatrixXd& h_b, const SinkhornOptions& options = {},
                     MassMode mode = MassMode::Unit);

/// Partial-alignment distance between two feature sequences (rows are time steps).
double pvla_distance(const Eigen::MatrixXd& h_a, const Eigen::MatrixXd& h_b, const SinkhornOptions& options = {});

/// Same s-sweep applied to two mask-tube feature sequences.
double ot_distance_tubes(const Eigen::MatrixXd& tube_i, const Eigen::MatrixXd& tube_j,
                         const SinkhornOptions& options = {});

/// Largest N_a * N_b accepted by exact_partial_ot.
inline constexpr Eigen::Index kExactPartialOtMaxCells = 36;

/// Exact optimum of min <T, C> s.t. T >= 0, T1 <= a, T'1 <= b, 1'T1 = s.
///
/// The problem is balanced by a zero-cost slack row (supply sum(b) - s) and
/// slack column (demand sum(a) - s), with slack-to-slack flow forbidden, and
/// solved by successive shortest augmenting paths.
double exact_partial_ot(const CostMatrix& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double s);

}  // namespace tvu
