#pragma once

// Loss-to-weight MLP and the three-step bilevel update: a virtual weighted SGD
// step on the model, a meta step on the weighting net through that virtual
// step, and the actual weighted model step.

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "tvu/errors.hpp"
#include "tvu/autodiff.hpp"

namespace tvu {

/// 1 -> H -> 1 perceptron, ReLU hidden layer, sigmoid output.
struct WeightNet {
  Eigen::RowVectorXd w1;  // 1 x H
  Eigen::RowVectorXd b1;  // 1 x H
  Eigen::VectorXd w2;     // H x 1
  double b2 = 0.0;

  Eigen::Index hidden() const { return w1.size(); }
  Eigen::Index parameter_count() const { return 3 * hidden() + 1; }

  static WeightNet zeros(Eigen::Index hidden = 100);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static WeightNet random(Eigen::Index hidden, std::mt19937_64& rng);

  double operator()(double loss) const;
  Eigen::VectorXd weights(const Eigen::VectorXd& losses) const;

  /// Parameter order: w1, b1, w2, b2.
  Eigen::VectorXd flatten() const;
  static WeightNet unflatten(const Eigen::VectorXd& theta, Eigen::Index hidden);
};

double weight_of_loss(const WeightNet& net, double loss);

enum class ToyLoss {
  Squared,   // 0.5 (x'T - y)^2
  Logistic,  // softplus(x'T) - y x'T, y in {0, 1}
};

struct Dataset {
  Eigen::MatrixXd x;        // N x D
  Eigen::VectorXd y;        // N
  std::vector<bool> noisy;  // label corrupted (training split only)

  Eigen::Index size() const { return x.rows(); }
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

/// Per-sample loss and gradient of a linear toy model.
struct ToyModel {
  ToyLoss kind = ToyLoss::Logistic;

  double loss(const Eigen::VectorXd& theta, const Eigen::RowVectorXd& x, double y) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta, const Eigen::RowVectorXd& x, double y) const;
  Eigen::VectorXd losses(const Eigen::VectorXd& theta, const Dataset& data) const;
  /// Row j is the gradient of sample j.
  Eigen::MatrixXd gradients(const Eigen::VectorXd& theta, const Dataset& data) const;
  double mean_loss(const Eigen::VectorXd& theta, const Dataset& data) const;
  /// Mean loss as a graph expression of a D x 1 parameter node.
  ad::Var mean_loss(ad::Var theta, const Dataset& data) const;
};

struct BilevelState {
  Eigen::VectorXd model;  // Theta
  WeightNet net;          // theta
  ToyModel toy;
  double alpha = 0.1;
  double beta = 0.1;
  Eigen::Index batch = 32;
  Eigen::Index meta_batch = 32;

  void validate() const;
};

/// Theta - (alpha / B) sum_j w(theta, L_j) grad L_j, summed in batch order.
Eigen::VectorXd weighted_step(const Eigen::VectorXd& model, const Eigen::VectorXd& weights,
                              const Eigen::MatrixXd& grads, double alpha);

Eigen::VectorXd virtual_step(const BilevelState& state, const Dataset& batch);

struct MetaStep {
  WeightNet net;           // theta'
  Eigen::VectorXd model_hat;
  double meta_loss = 0.0;  // mean meta loss at Theta-hat
  Eigen::VectorXd gradient;  // d meta_loss / d theta, flattened
};

/// theta' = theta - beta * grad_theta mean_i L_i^meta(Theta-hat(theta)), differentiating
/// through the virtual step.
MetaStep meta_step(const BilevelState& state, const Dataset& batch, const Dataset& meta_batch);

Eigen::VectorXd model_step(const BilevelState& state, const WeightNet& next_net, const Dataset& batch);

/// Max-norm gap between theta' from meta_step and from the expansion
/// theta + (alpha beta / (B M)) sum_ij G_ij dw_j/dtheta.
double gij_expansion_check(const BilevelState& state, const Dataset& batch, const Dataset& meta_batch);

/// The expansion path of gij_expansion_check, exposed for tests.
Eigen::VectorXd gij_expansion_update(const BilevelState& state, const Dataset& batch, const Dataset& meta_batch);

enum class Weighting { Learned, ConstantOne };

struct MetaTrainingConfig {
  long steps = 300;
  double alpha = 0.5;
  double beta = 10.0;
  Eigen::Index batch = 32;
  Eigen::Index meta_batch = 32;
  Eigen::Index hidden = 100;
  Weighting weighting = Weighting::Learned;
  std::uint64_t seed = 7;
  ToyLoss loss = ToyLoss::Logistic;
};

struct TraceRow {
  long step = 0;
  double mean_weight_clean = 0.0;
  double mean_weight_noisy = 0.0;
  double train_loss = 0.0;
  double meta_loss = 0.0;
};

struct MetaTrainingResult {
  Eigen::VectorXd model;
  WeightNet net;
  std::vector<TraceRow> trace;
};

/// Runs the bilevel loop. Training batches are drawn from a generator seeded
/// with seed + 1 and meta batches (without replacement) from seed + 2.
MetaTrainingResult run_meta_training(const MetaTrainingConfig& config, const Dataset& train, const Dataset& meta,
                                     const Eigen::VectorXd& initial_model);

/// Plain minibatch SGD consuming the same training-batch stream as run_meta_training.
Eigen::VectorXd plain_sgd(const MetaTrainingConfig& config, const Dataset& train, const Eigen::VectorXd& initial_model);

}  // namespace tvu
