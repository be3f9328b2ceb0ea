#pragma once

// InfoNCE and the subtractive angular-margin contrastive loss over a batch of
// cosine similarities S (rows: videos, columns: texts).

#include <Eigen/Core>

#include "tvu/errors.hpp"
#include "tvu/autodiff.hpp"

namespace tvu {

enum class Direction { VideoToText, TextToVideo };

/// Throws DomainError when an entry leaves [-1, 1] by more than 1e-12.
void validate_similarity(const Eigen::MatrixXd& s);

double infonce_loss(const Eigen::MatrixXd& s, double tau, Eigen::Index anchor, Direction dir);

/// arccos of a similarity clamped into [-1, 1].
double angle_of(double s);

double angular_margin_loss(const Eigen::MatrixXd& s, double tau, double mu, Eigen::Index anchor, Direction dir);

struct MarginSchedule {
  double a0 = 2.0;
  double a1 = 10.0;
  double a2 = 0.1;

  /// The decaying variant (a0 = 0.2, a2 = -0.1).
  static MarginSchedule decaying() { return {0.2, 10.0, -0.1}; }

  double at(long step) const;
};

/// mu(k) = a0 / (a1 + exp(-a2 k)).
double margin_at_step(const MarginSchedule& schedule, long step);

struct Theorem1Report {
  double angular_grad = 0.0;      // |dL_angular / d lambda_ii|
  double contrastive_grad = 0.0;  // |dL_infonce / d lambda_ii|
  bool holds = false;             // angular <= contrastive + slack
};

/// Gradient magnitudes with respect to the positive angle, both through autodiff.
/// `negatives` are the off-diagonal angles of the anchor row.
Theorem1Report theorem1_check(double lambda_ii, const Eigen::VectorXd& negatives, double tau, double mu,
                              double slack = 1e-9);

/// L_vt + L_tv + eta * L_ce.
double total_objective(double l_vt, double l_tv, double l_ce, double eta);

namespace graph {

/// Scalar InfoNCE over a B x B similarity node.
ad::Var infonce_loss(ad::Var s, double tau, Eigen::Index anchor, Direction dir);

/// Angular-margin loss from the B x B similarity node (clamped, then arccos).
ad::Var angular_margin_loss(ad::Var s, double tau, double mu, Eigen::Index anchor, Direction dir);

/// Angular-margin loss from a 1 x B row of angles whose entry `positive` is the positive pair.
ad::Var angular_margin_from_angles(ad::Var angles, double tau, double mu, Eigen::Index positive);

}  // namespace graph
}  // namespace tvu
