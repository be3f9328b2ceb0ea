#include "tvu/margin_contrast.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tvu/errors.hpp"

namespace tvu {
namespace {

constexpr double kClampBand = 1e-12;
constexpr double kHalfPi = std::numbers::pi / 2.0;

void check_common(const Eigen::MatrixXd& s, double tau, Eigen::Index anchor) {
  if (s.rows() != s.cols()) throw ShapeError("similarity matrix must be square");
  if (s.rows() == 0) throw PreconditionError("empty similarity matrix");
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
  if (anchor < 0 || anchor >= s.rows()) throw PreconditionError("anchor index out of range");
  validate_similarity(s);
}

Eigen::VectorXd anchor_row(const Eigen::MatrixXd& s, Eigen::Index anchor, Direction dir) {
  return dir == Direction::VideoToText ? Eigen::VectorXd(s.row(anchor).transpose()) : Eigen::VectorXd(s.col(anchor));
}

// -log softmax(logits)[pos]
double nll(const Eigen::VectorXd& logits, Eigen::Index pos) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits[pos];
}

double positive_logit(double lambda, double mu) {
  return lambda <= kHalfPi ? std::cos(std::max(lambda - mu, 0.0)) : std::cos(lambda);
}

ad::Var anchor_row(ad::Var s, Eigen::Index anchor, Direction dir) {
  return dir == Direction::VideoToText ? ad::row(s, anchor) : ad::transpose(ad::col(s, anchor));
}

}  // namespace

void validate_similarity(const Eigen::MatrixXd& s) {
  if (!s.allFinite()) throw DomainError("similarity matrix has non-finite entries");
  if (s.size() > 0 && s.cwiseAbs().maxCoeff() > 1.0 + kClampBand) {
    throw DomainError("similarity outside [-1, 1]: " + std::to_string(s.cwiseAbs().maxCoeff()));
  }
}

double infonce_loss(const Eigen::MatrixXd& s, double tau, Eigen::Index anchor, Direction dir) {
  check_common(s, tau, anchor);
  return nll(anchor_row(s, anchor, dir) / tau, anchor);
}

double angle_of(double s) {
  if (!(std::abs(s) <= 1.0 + kClampBand)) throw DomainError("angle_of: similarity " + std::to_string(s));
  return std::acos(std::clamp(s, -1.0, 1.0));
}

double angular_margin_loss(const Eigen::MatrixXd& s, double tau, double mu, Eigen::Index anchor, Direction dir) {
  check_common(s, tau, anchor);
  if (!(mu >= 0.0)) throw PreconditionError("margin must be nonnegative");
  const Eigen::VectorXd row = anchor_row(s, anchor, dir);
  Eigen::VectorXd logits(row.size());
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    const double lambda = angle_of(row[j]);
    logits[j] = (j == anchor ? positive_logit(lambda, mu) : std::cos(lambda)) / tau;
  }
  return nll(logits, anchor);
}

double MarginSchedule::at(long step) const { return margin_at_step(*this, step); }

double margin_at_step(const MarginSchedule& sc, long step) {
  if (step < 0) throw PreconditionError("margin schedule step must be nonnegative");
  const double denom = sc.a1 + std::exp(-sc.a2 * static_cast<double>(step));
  if (!(denom > 0.0)) throw PreconditionError("margin schedule denominator a1 + exp(-a2 k) is not positive");
  return sc.a0 / denom;
}

Theorem1Report theorem1_check(double lambda_ii, const Eigen::VectorXd& negatives, double tau, double mu,
                              double slack) {
  if (!(lambda_ii > 0.0 && lambda_ii <= kHalfPi)) throw PreconditionError("theorem1_check: lambda_ii outside (0, pi/2]");
  if (!(tau > 0.0) || !(mu >= 0.0)) throw PreconditionError("theorem1_check: need tau > 0 and mu >= 0");

  auto grad = [&](bool with_margin) {
    ad::Graph g;
    ad::Var lambda = g.leaf("lambda", lambda_ii);
    ad::Var row = ad::hcat({lambda, g.constant(Eigen::MatrixXd(negatives.transpose()))});
    ad::Var loss;
    if (with_margin) {
      loss = graph::angular_margin_from_angles(row, tau, mu, 0);
    } else {
      ad::Var logits = ad::cos(row) / tau;
      loss = ad::logsumexp_rows(logits) - ad::element(logits, 0, 0);
    }
    g.set_root(loss);
    g.forward();
    return std::abs(g.backward().at("lambda")(0, 0));
  };

  Theorem1Report r;
  r.contrastive_grad = grad(false);
  r.angular_grad = grad(true);
  r.holds = r.angular_grad <= r.contrastive_grad + slack;
  return r;
}

double total_objective(double l_vt, double l_tv, double l_ce, double eta) {
  if (!(eta >= 0.0)) throw PreconditionError("eta must be nonnegative");
  return l_vt + l_tv + eta * l_ce;
}

namespace graph {

ad::Var infonce_loss(ad::Var s, double tau, Eigen::Index anchor, Direction dir) {
  if (s.rows() != s.cols()) throw ShapeError("similarity matrix must be square");
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
  ad::Var logits = anchor_row(s, anchor, dir) / tau;
  return ad::logsumexp_rows(logits) - ad::element(logits, 0, anchor);
}

ad::Var angular_margin_loss(ad::Var s, double tau, double mu, Eigen::Index anchor, Direction dir) {
  if (s.rows() != s.cols()) throw ShapeError("similarity matrix must be square");
  ad::Var angles = ad::acos(ad::clamp(anchor_row(s, anchor, dir), -1.0, 1.0));
  return angular_margin_from_angles(angles, tau, mu, anchor);
}

ad::Var angular_margin_from_angles(ad::Var angles, double tau, double mu, Eigen::Index positive) {
  if (angles.rows() != 1) throw ShapeError("angles must be a row vector");
  if (positive < 0 || positive >= angles.cols()) throw PreconditionError("positive index out of range");
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
  if (!(mu >= 0.0)) throw PreconditionError("margin must be nonnegative");
  ad::Graph& g = *angles.graph();
  ad::Var lambda = ad::element(angles, 0, positive);
  ad::Var pos = ad::select_le(lambda, kHalfPi, ad::cos(ad::maximum(lambda - mu, g.constant(0.0))), ad::cos(lambda));
  // Replace the positive entry of cos(angles) by the margin logit.
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(1, angles.cols());
  onehot(0, positive) = 1.0;
  ad::Var cosines = ad::cos(angles);
  ad::Var logits = (cosines + g.constant(onehot) * (pos - ad::element(cosines, 0, positive))) / tau;
  return ad::logsumexp_rows(logits) - ad::element(logits, 0, positive);
}

}  // namespace graph
}  // namespace tvu
