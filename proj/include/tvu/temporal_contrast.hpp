#pragma once

// Sequence-level contrastive objectives: motion filtering and OT-similarity
// contrast over mask tubes, within/cross-scale pyramid losses, the C3
// congruence loss, and the focal / 1-D DIoU terms of the grounding objective.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "tvu/errors.hpp"
#include "tvu/autodiff.hpp"
#include "tvu/partial_ot.hpp"

namespace tvu {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// 3x3 Sobel gradient magnitude with replicated borders.
Eigen::MatrixXd sobel_magnitude(const Eigen::MatrixXd& image);

struct MotionScore {
  std::vector<std::optional<double>> per_frame;  // empty mask -> no score
  double tube = 0.0;                             // max over scored frames
};

/// Median Sobel magnitude of each flow map over its mask, max over frames.
MotionScore motion_score(const std::vector<Eigen::MatrixXd>& flow_magnitude, const std::vector<BoolMatrix>& masks);

inline constexpr double kMotionGate = 9.0;

bool strong_motion(const MotionScore& score, double gamma = kMotionGate);

inline constexpr double kOtMargin = 10.0;

/// alpha - ot_distance_tubes(a, b).
double ot_similarity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double alpha = kOtMargin,
                     const SinkhornOptions& options = {});

/// Row-permuted copies of h. Identity permutations are skipped, nothing is
/// produced for T = 1 or when the motion gate failed.
std::vector<Eigen::MatrixXd> shuffle_negatives(const Eigen::MatrixXd& h, const std::vector<std::vector<Eigen::Index>>& perms,
                                               bool motion_ok);

/// `count` uniformly drawn non-identity permutations of 0..T-1 (T >= 2).
std::vector<std::vector<Eigen::Index>> random_permutations(Eigen::Index length, int count, std::mt19937_64& rng);

struct TubeTriplet {
  int subject = 0;
  int relation = 0;
  int object = 0;
  Eigen::MatrixXd subject_features;  // T x D
  Eigen::MatrixXd object_features;   // T x D
  int video = 0;

  /// [subject | object], T x 2D.
  Eigen::MatrixXd anchor() const;
  int shared_with(const TubeTriplet& other) const;
};

/// Indices into `candidates` of n draws without replacement, weight 1 + shared components.
std::vector<std::size_t> triplet_negative_sampling(const TubeTriplet& anchor, const std::vector<TubeTriplet>& candidates,
                                                   std::size_t n, std::uint64_t seed);

/// Candidates with identical classes from another video.
std::vector<std::size_t> triplet_positive_candidates(const TubeTriplet& anchor, const std::vector<TubeTriplet>& pool);

/// -log(e^{s_p} / (e^{s_p} + sum_z e^{s_z})).
double motion_contrastive_loss(double positive_similarity, const Eigen::VectorXd& negative_similarities);

double motion_contrastive_loss(const Eigen::MatrixXd& anchor, const Eigen::MatrixXd& positive,
                               const std::vector<Eigen::MatrixXd>& negatives, double alpha = kOtMargin,
                               const SinkhornOptions& options = {});

struct PyramidTargets {
  std::vector<std::vector<Eigen::Index>> positives;  // P(l), l = 0..L
  std::vector<std::vector<Eigen::Index>> negatives;  // N(l)

  std::size_t levels() const { return positives.size(); }
  /// Disjointness and index ranges against the per-level feature matrices.
  void validate(const std::vector<Eigen::MatrixXd>& pyramid) const;
};

double within_scale_loss(const std::vector<Eigen::MatrixXd>& pyramid, const PyramidTargets& targets,
                         double temperature = 1.0);
double cross_scale_loss(const std::vector<Eigen::MatrixXd>& pyramid, const PyramidTargets& targets,
                        double temperature = 1.0);

/// Symmetric KL between row softmaxes of R = G_vw G_ww G_vw' and G_vv, summed over rows.
double c3_loss(const Eigen::MatrixXd& j_v, const Eigen::MatrixXd& j_w);

/// sum over rows of KL(P||Q) + KL(Q||P) for row-softmax(x), row-softmax(y).
double symmetric_kl_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

inline constexpr double kFocalGamma = 2.0;

double focal_loss(double p, int target, double gamma = kFocalGamma);

struct Span {
  double start = 0.0;
  double end = 0.0;
};

double diou_1d(const Span& pred, const Span& gt);

double combined_grounding_objective(double l_cls, double l_reg, double l_within, double l_cross, double rho_reg = 1.0,
                                    double rho_within = 1.0, double rho_cross = 1.0);

namespace graph {

/// `sims` is 1 x (1 + Z) with the positive similarity first.
ad::Var motion_contrastive_loss(ad::Var sims);
ad::Var within_scale_loss(const std::vector<ad::Var>& pyramid, const PyramidTargets& targets, double temperature = 1.0);
ad::Var cross_scale_loss(const std::vector<ad::Var>& pyramid, const PyramidTargets& targets, double temperature = 1.0);
ad::Var c3_loss(ad::Var j_v, ad::Var j_w);
/// Elementwise focal loss of probabilities p against constant 0/1 targets, summed.
ad::Var focal_loss(ad::Var p, const Eigen::MatrixXd& targets, double gamma = kFocalGamma);
/// pred is a 1 x 2 [start, end] node.
ad::Var diou_1d(ad::Var pred, const Span& gt);

}  // namespace graph
}  // namespace tvu
