#include "tvu/meta_reweight.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "tvu/errors.hpp"

namespace tvu {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Partial Fisher-Yates: k distinct indices of [0, n).
std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  if (k > n) throw PreconditionError("batch larger than the dataset");
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

struct NetVars {
  ad::Var w1, b1, w2, b2;
};

NetVars net_leaves(ad::Graph& g, const WeightNet& net) {
  return {g.leaf("w1", Eigen::MatrixXd(net.w1)), g.leaf("b1", Eigen::MatrixXd(net.b1)),
          g.leaf("w2", Eigen::MatrixXd(net.w2)), g.leaf("b2", net.b2)};
}

// B x 1 losses -> B x 1 weights.
ad::Var net_forward(const NetVars& v, ad::Var losses) {
  ad::Var h = ad::relu(ad::add_row_broadcast(ad::matmul(losses, v.w1), v.b1));
  return ad::sigmoid(ad::matmul(h, v.w2) + v.b2);
}

Eigen::VectorXd flatten(const ad::GradientMap& g) {
  const Eigen::Index h = g.at("w1").size();
  Eigen::VectorXd out(3 * h + 1);
  out << Eigen::Map<const Eigen::VectorXd>(g.at("w1").data(), h), Eigen::Map<const Eigen::VectorXd>(g.at("b1").data(), h),
      Eigen::Map<const Eigen::VectorXd>(g.at("w2").data(), h), g.at("b2")(0, 0);
  return out;
}

// dw/dtheta for one loss value, written out by hand (ReLU gradient 1 at 0).
Eigen::VectorXd weight_jacobian(const WeightNet& net, double loss) {
  const Eigen::Index h = net.hidden();
  const Eigen::RowVectorXd pre = loss * net.w1 + net.b1;
  const Eigen::RowVectorXd act = pre.cwiseMax(0.0);
  const double w = sigmoid(act.dot(net.w2.transpose()) + net.b2);
  const double ds = w * (1.0 - w);
  Eigen::VectorXd out(3 * h + 1);
  for (Eigen::Index k = 0; k < h; ++k) {
    const double gate = pre[k] >= 0.0 ? ds * net.w2[k] : 0.0;
    out[k] = gate * loss;
    out[h + k] = gate;
    out[2 * h + k] = ds * act[k];
  }
  out[3 * h] = ds;
  return out;
}

}  // namespace

WeightNet WeightNet::zeros(Eigen::Index hidden) {
  if (hidden < 1) throw PreconditionError("WeightNet: hidden width must be positive");
  return {Eigen::RowVectorXd::Zero(hidden), Eigen::RowVectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden), 0.0};
}

WeightNet WeightNet::random(Eigen::Index hidden, std::mt19937_64& rng) {
  WeightNet net = zeros(hidden);
  std::uniform_real_distribution<double> first(-1.0, 1.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> second(-bound, bound);
  for (Eigen::Index k = 0; k < hidden; ++k) net.w1[k] = first(rng);
  for (Eigen::Index k = 0; k < hidden; ++k) net.b1[k] = first(rng);
  for (Eigen::Index k = 0; k < hidden; ++k) net.w2[k] = second(rng);
  net.b2 = second(rng);
  return net;
}

double WeightNet::operator()(double loss) const {
  if (!std::isfinite(loss)) throw PreconditionError("WeightNet: non-finite loss");
  const Eigen::RowVectorXd act = (loss * w1 + b1).cwiseMax(0.0);
  return sigmoid(act.dot(w2.transpose()) + b2);
}

Eigen::VectorXd WeightNet::weights(const Eigen::VectorXd& losses) const {
  Eigen::VectorXd w(losses.size());
  for (Eigen::Index j = 0; j < losses.size(); ++j) w[j] = (*this)(losses[j]);
  return w;
}

Eigen::VectorXd WeightNet::flatten() const {
  const Eigen::Index h = hidden();
  Eigen::VectorXd out(3 * h + 1);
  out << w1.transpose(), b1.transpose(), w2, b2;
  return out;
}

WeightNet WeightNet::unflatten(const Eigen::VectorXd& theta, Eigen::Index hidden) {
  if (theta.size() != 3 * hidden + 1) throw ShapeError("WeightNet::unflatten: wrong parameter count");
  WeightNet net;
  net.w1 = theta.segment(0, hidden).transpose();
  net.b1 = theta.segment(hidden, hidden).transpose();
  net.w2 = theta.segment(2 * hidden, hidden);
  net.b2 = theta[3 * hidden];
  return net;
}

double weight_of_loss(const WeightNet& net, double loss) { return net(loss); }

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    out.y[static_cast<Eigen::Index>(i)] = y[rows[i]];
    if (!noisy.empty()) out.noisy.push_back(noisy[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

double ToyModel::loss(const Eigen::VectorXd& theta, const Eigen::RowVectorXd& x, double y) const {
  const double z = x.dot(theta.transpose());
  if (kind == ToyLoss::Squared) return 0.5 * (z - y) * (z - y);
  return softplus(z) - y * z;
}

Eigen::VectorXd ToyModel::gradient(const Eigen::VectorXd& theta, const Eigen::RowVectorXd& x, double y) const {
  const double z = x.dot(theta.transpose());
  const double r = kind == ToyLoss::Squared ? z - y : sigmoid(z) - y;
  return r * x.transpose();
}

Eigen::VectorXd ToyModel::losses(const Eigen::VectorXd& theta, const Dataset& data) const {
  Eigen::VectorXd out(data.size());
  for (Eigen::Index j = 0; j < data.size(); ++j) out[j] = loss(theta, data.x.row(j), data.y[j]);
  return out;
}

Eigen::MatrixXd ToyModel::gradients(const Eigen::VectorXd& theta, const Dataset& data) const {
  Eigen::MatrixXd out(data.size(), theta.size());
  for (Eigen::Index j = 0; j < data.size(); ++j) out.row(j) = gradient(theta, data.x.row(j), data.y[j]).transpose();
  return out;
}

double ToyModel::mean_loss(const Eigen::VectorXd& theta, const Dataset& data) const {
  return losses(theta, data).mean();
}

ad::Var ToyModel::mean_loss(ad::Var theta, const Dataset& data) const {
  ad::Graph& g = *theta.graph();
  ad::Var z = ad::matmul(g.constant(data.x), theta);
  ad::Var y = g.constant(Eigen::MatrixXd(data.y));
  if (kind == ToyLoss::Squared) return ad::mean(0.5 * ad::square(z - y));
  return ad::mean(ad::softplus(z) - y * z);
}

void BilevelState::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw PreconditionError("BilevelState: step sizes must be nonnegative");
  if (batch < 1 || meta_batch < 1) throw PreconditionError("BilevelState: batch sizes must be >= 1");
}

Eigen::VectorXd weighted_step(const Eigen::VectorXd& model, const Eigen::VectorXd& weights,
                              const Eigen::MatrixXd& grads, double alpha) {
  if (grads.rows() != weights.size() || grads.cols() != model.size()) throw ShapeError("weighted_step: shape mismatch");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.size());
  for (Eigen::Index j = 0; j < grads.rows(); ++j) acc += weights[j] * grads.row(j).transpose();
  return model - (alpha / static_cast<double>(grads.rows())) * acc;
}

Eigen::VectorXd virtual_step(const BilevelState& state, const Dataset& batch) {
  const Eigen::VectorXd w = state.net.weights(state.toy.losses(state.model, batch));
  return weighted_step(state.model, w, state.toy.gradients(state.model, batch), state.alpha);
}

MetaStep meta_step(const BilevelState& state, const Dataset& batch, const Dataset& meta_batch) {
  state.validate();
  ad::Graph g;
  NetVars net = net_leaves(g, state.net);
  ad::Var losses = g.constant(Eigen::MatrixXd(state.toy.losses(state.model, batch)));
  ad::Var grads = g.constant(state.toy.gradients(state.model, batch));
  ad::Var w = net_forward(net, losses);
  const double step = state.alpha / static_cast<double>(batch.size());
  ad::Var model_hat = g.constant(Eigen::MatrixXd(state.model)) - step * ad::matmul(ad::transpose(grads), w);
  ad::Var meta_loss = state.toy.mean_loss(model_hat, meta_batch);
  g.set_root(meta_loss);

  MetaStep out;
  out.meta_loss = g.forward_scalar();
  out.model_hat = model_hat.value();
  out.gradient = flatten(g.backward());
  out.net = WeightNet::unflatten(state.net.flatten() - state.beta * out.gradient, state.net.hidden());
  return out;
}

Eigen::VectorXd model_step(const BilevelState& state, const WeightNet& next_net, const Dataset& batch) {
  const Eigen::VectorXd w = next_net.weights(state.toy.losses(state.model, batch));
  return weighted_step(state.model, w, state.toy.gradients(state.model, batch), state.alpha);
}

Eigen::VectorXd gij_expansion_update(const BilevelState& state, const Dataset& batch, const Dataset& meta_batch) {
  state.validate();
  const Eigen::MatrixXd train_grads = state.toy.gradients(state.model, batch);
  const Eigen::VectorXd train_losses = state.toy.losses(state.model, batch);
  const Eigen::VectorXd model_hat = virtual_step(state, batch);
  const Eigen::MatrixXd meta_grads = state.toy.gradients(model_hat, meta_batch);
  const Eigen::MatrixXd gij = meta_grads * train_grads.transpose();  // M x B

  Eigen::VectorXd update = Eigen::VectorXd::Zero(state.net.parameter_count());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    update += gij.col(j).sum() * weight_jacobian(state.net, train_losses[j]);
  }
  const double scale =
      state.alpha * state.beta / (static_cast<double>(batch.size()) * static_cast<double>(meta_batch.size()));
  return state.net.flatten() + scale * update;
}

double gij_expansion_check(const BilevelState& state, const Dataset& batch, const Dataset& meta_batch) {
  const Eigen::VectorXd via_graph = meta_step(state, batch, meta_batch).net.flatten();
  const Eigen::VectorXd via_expansion = gij_expansion_update(state, batch, meta_batch);
  return (via_graph - via_expansion).cwiseAbs().maxCoeff();
}

namespace {

TraceRow trace_row(long step, const Eigen::VectorXd& model, const WeightNet* net, const ToyModel& toy,
                   const Dataset& train, const Dataset& meta) {
  TraceRow row;
  row.step = step;
  const Eigen::VectorXd losses = toy.losses(model, train);
  row.train_loss = losses.mean();
  row.meta_loss = toy.mean_loss(model, meta);
  double clean = 0.0, noisy = 0.0;
  Eigen::Index n_clean = 0, n_noisy = 0;
  for (Eigen::Index j = 0; j < train.size(); ++j) {
    const double w = net ? (*net)(losses[j]) : 1.0;
    if (!train.noisy.empty() && train.noisy[static_cast<std::size_t>(j)]) {
      noisy += w;
      ++n_noisy;
    } else {
      clean += w;
      ++n_clean;
    }
  }
  row.mean_weight_clean = n_clean ? clean / static_cast<double>(n_clean) : 0.0;
  row.mean_weight_noisy = n_noisy ? noisy / static_cast<double>(n_noisy) : 0.0;
  return row;
}

void check_config(const MetaTrainingConfig& c, const Dataset& train) {
  if (c.steps < 0) throw PreconditionError("meta training: steps must be >= 0");
  if (!(c.alpha > 0.0) || !(c.beta >= 0.0)) throw PreconditionError("meta training: need alpha > 0, beta >= 0");
  if (c.batch < 1 || c.batch > train.size()) throw PreconditionError("meta training: batch size out of range");
  if (c.meta_batch < 1) throw PreconditionError("meta training: meta batch size must be >= 1");
}

}  // namespace

MetaTrainingResult run_meta_training(const MetaTrainingConfig& config, const Dataset& train, const Dataset& meta,
                                     const Eigen::VectorXd& initial_model) {
  check_config(config, train);
  if (config.weighting == Weighting::Learned && config.meta_batch > meta.size()) {
    throw PreconditionError("meta training: meta batch larger than the meta set");
  }
  std::mt19937_64 init_rng(config.seed);
  std::mt19937_64 train_rng(config.seed + 1);
  std::mt19937_64 meta_rng(config.seed + 2);

  BilevelState state;
  state.model = initial_model;
  state.net = WeightNet::random(config.hidden, init_rng);
  state.toy.kind = config.loss;
  state.alpha = config.alpha;
  state.beta = config.beta;
  state.batch = config.batch;
  state.meta_batch = config.meta_batch;

  MetaTrainingResult result;
  const bool learned = config.weighting == Weighting::Learned;
  for (long k = 0; k < config.steps; ++k) {
    const Dataset batch = train.subset(sample_without_replacement(train.size(), config.batch, train_rng));
    if (learned) {
      const Dataset meta_batch = meta.subset(sample_without_replacement(meta.size(), config.meta_batch, meta_rng));
      state.net = meta_step(state, batch, meta_batch).net;
      state.model = model_step(state, state.net, batch);
    } else {
      const Eigen::VectorXd ones = Eigen::VectorXd::Ones(batch.size());
      state.model = weighted_step(state.model, ones, state.toy.gradients(state.model, batch), state.alpha);
    }
    result.trace.push_back(trace_row(k + 1, state.model, learned ? &state.net : nullptr, state.toy, train, meta));
  }
  result.model = state.model;
  result.net = state.net;
  return result;
}

Eigen::VectorXd plain_sgd(const MetaTrainingConfig& config, const Dataset& train, const Eigen::VectorXd& initial_model) {
  check_config(config, train);
  std::mt19937_64 train_rng(config.seed + 1);
  ToyModel toy{config.loss};
  Eigen::VectorXd model = initial_model;
  for (long k = 0; k < config.steps; ++k) {
    const Dataset batch = train.subset(sample_without_replacement(train.size(), config.batch, train_rng));
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.size());
    for (Eigen::Index j = 0; j < batch.size(); ++j) acc += toy.gradient(model, batch.x.row(j), batch.y[j]);
    model = model - (config.alpha / static_cast<double>(batch.size())) * acc;
  }
  return model;
}

}  // namespace tvu
