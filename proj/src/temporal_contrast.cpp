#include "tvu/temporal_contrast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tvu/errors.hpp"

namespace tvu {
namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// -log(e^a / (e^a + sum_n e^{negs_n})) = log(1 + sum_n e^{negs_n - a})
double pair_term(double a, const std::vector<double>& negs) {
  std::vector<double> shifted{0.0};
  for (double n : negs) shifted.push_back(n - a);
  return logsumexp(shifted);
}

void check_temperature(double t) {
  if (!(t > 0.0)) throw PreconditionError("temperature must be positive");
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  return y;
}

void check_span(const Span& s) {
  if (!std::isfinite(s.start) || !std::isfinite(s.end) || s.end < s.start) {
    throw PreconditionError("degenerate span [" + std::to_string(s.start) + ", " + std::to_string(s.end) + "]");
  }
}

}  // namespace

Eigen::MatrixXd sobel_magnitude(const Eigen::MatrixXd& img) {
  const Eigen::Index h = img.rows(), w = img.cols();
  auto at = [&](Eigen::Index r, Eigen::Index c) {
    return img(std::clamp<Eigen::Index>(r, 0, h - 1), std::clamp<Eigen::Index>(c, 0, w - 1));
  };
  Eigen::MatrixXd out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      const double gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
      out(r, c) = std::hypot(gx, gy);
    }
  }
  return out;
}

MotionScore motion_score(const std::vector<Eigen::MatrixXd>& flow, const std::vector<BoolMatrix>& masks) {
  if (flow.size() != masks.size()) throw ShapeError("motion_score: frame counts differ");
  MotionScore out;
  bool any = false;
  for (std::size_t t = 0; t < flow.size(); ++t) {
    if (flow[t].rows() != masks[t].rows() || flow[t].cols() != masks[t].cols()) {
      throw ShapeError("motion_score: mask and flow shapes differ at frame " + std::to_string(t));
    }
    const Eigen::MatrixXd mag = sobel_magnitude(flow[t]);
    std::vector<double> vals;
    for (Eigen::Index c = 0; c < mag.cols(); ++c)
      for (Eigen::Index r = 0; r < mag.rows(); ++r)
        if (masks[t](r, c)) vals.push_back(mag(r, c));
    if (vals.empty()) {
      out.per_frame.emplace_back();
      continue;
    }
    const double m = median(std::move(vals));
    out.per_frame.emplace_back(m);
    out.tube = any ? std::max(out.tube, m) : m;
    any = true;
  }
  if (!any) throw PreconditionError("motion_score: every mask in the tube is empty");
  return out;
}

bool strong_motion(const MotionScore& score, double gamma) { return score.tube > gamma; }

double ot_similarity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double alpha, const SinkhornOptions& opt) {
  return alpha - ot_distance_tubes(a, b, opt);
}

std::vector<Eigen::MatrixXd> shuffle_negatives(const Eigen::MatrixXd& h, const std::vector<std::vector<Eigen::Index>>& perms,
                                               bool motion_ok) {
  const Eigen::Index t = h.rows();
  for (const auto& p : perms) {
    if (static_cast<Eigen::Index>(p.size()) != t) throw PreconditionError("shuffle_negatives: permutation length");
    std::vector<bool> seen(p.size(), false);
    for (Eigen::Index i : p) {
      if (i < 0 || i >= t || seen[static_cast<std::size_t>(i)]) {
        throw PreconditionError("shuffle_negatives: not a permutation");
      }
      seen[static_cast<std::size_t>(i)] = true;
    }
  }
  std::vector<Eigen::MatrixXd> out;
  if (!motion_ok || t < 2) return out;
  for (const auto& p : perms) {
    bool identity = true;
    for (Eigen::Index i = 0; i < t; ++i) identity = identity && p[static_cast<std::size_t>(i)] == i;
    if (identity) continue;
    Eigen::MatrixXd m(t, h.cols());
    for (Eigen::Index i = 0; i < t; ++i) m.row(i) = h.row(p[static_cast<std::size_t>(i)]);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::vector<Eigen::Index>> random_permutations(Eigen::Index length, int count, std::mt19937_64& rng) {
  if (length < 2) throw PreconditionError("random_permutations: need at least two steps");
  std::vector<std::vector<Eigen::Index>> out;
  std::vector<Eigen::Index> p(static_cast<std::size_t>(length));
  while (static_cast<int>(out.size()) < count) {
    std::iota(p.begin(), p.end(), Eigen::Index{0});
    std::shuffle(p.begin(), p.end(), rng);
    if (!std::is_sorted(p.begin(), p.end())) out.push_back(p);
  }
  return out;
}

Eigen::MatrixXd TubeTriplet::anchor() const {
  if (subject_features.rows() != object_features.rows() || subject_features.rows() < 1) {
    throw ShapeError("TubeTriplet: subject and object tubes need the same T >= 1");
  }
  Eigen::MatrixXd h(subject_features.rows(), subject_features.cols() + object_features.cols());
  h << subject_features, object_features;
  return h;
}

int TubeTriplet::shared_with(const TubeTriplet& o) const {
  return (subject == o.subject) + (relation == o.relation) + (object == o.object);
}

std::vector<std::size_t> triplet_negative_sampling(const TubeTriplet& anchor, const std::vector<TubeTriplet>& candidates,
                                                   std::size_t n, std::uint64_t seed) {
  if (candidates.empty()) throw PreconditionError("triplet_negative_sampling: empty candidate pool");
  if (n > candidates.size()) throw PreconditionError("triplet_negative_sampling: n exceeds the pool size");
  std::vector<double> weight;
  for (const auto& c : candidates) {
    if (c.video != anchor.video) throw PreconditionError("triplet_negative_sampling: candidate from another video");
    const int shared = anchor.shared_with(c);
    if (shared == 3) throw PreconditionError("triplet_negative_sampling: candidate has the anchor's categories");
    weight.push_back(1.0 + shared);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < n; ++k) {
    std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
    const std::size_t i = pick(rng);
    out.push_back(i);
    weight[i] = 0.0;
  }
  return out;
}

std::vector<std::size_t> triplet_positive_candidates(const TubeTriplet& anchor, const std::vector<TubeTriplet>& pool) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].video != anchor.video && anchor.shared_with(pool[i]) == 3) out.push_back(i);
  }
  return out;
}

double motion_contrastive_loss(double sp, const Eigen::VectorXd& negs) {
  return pair_term(sp, std::vector<double>(negs.data(), negs.data() + negs.size()));
}

double motion_contrastive_loss(const Eigen::MatrixXd& anchor, const Eigen::MatrixXd& positive,
                               const std::vector<Eigen::MatrixXd>& negatives, double alpha,
                               const SinkhornOptions& opt) {
  Eigen::VectorXd negs(static_cast<Eigen::Index>(negatives.size()));
  for (std::size_t z = 0; z < negatives.size(); ++z) {
    negs[static_cast<Eigen::Index>(z)] = ot_similarity(anchor, negatives[z], alpha, opt);
  }
  return motion_contrastive_loss(ot_similarity(anchor, positive, alpha, opt), negs);
}

void PyramidTargets::validate(const std::vector<Eigen::MatrixXd>& pyramid) const {
  if (positives.size() != negatives.size()) throw PreconditionError("PyramidTargets: P and N level counts differ");
  if (positives.size() > pyramid.size()) throw PreconditionError("PyramidTargets: more target levels than features");
  for (std::size_t l = 0; l < positives.size(); ++l) {
    const Eigen::Index len = pyramid[l].rows();
    for (const auto* set : {&positives[l], &negatives[l]}) {
      for (Eigen::Index i : *set) {
        if (i < 0 || i >= len) {
          throw PreconditionError("PyramidTargets: index " + std::to_string(i) + " outside level " + std::to_string(l));
        }
      }
    }
    for (Eigen::Index i : positives[l]) {
      if (std::find(negatives[l].begin(), negatives[l].end(), i) != negatives[l].end()) {
        throw PreconditionError("PyramidTargets: index in both P and N at level " + std::to_string(l));
      }
    }
  }
}

double within_scale_loss(const std::vector<Eigen::MatrixXd>& z, const PyramidTargets& tg, double temperature) {
  check_temperature(temperature);
  tg.validate(z);
  double loss = 0.0;
  for (std::size_t l = 1; l < tg.levels(); ++l) {
    const auto& p = tg.positives[l];
    if (p.size() < 2) continue;
    for (Eigen::Index i : p) {
      std::vector<double> negs;
      for (Eigen::Index n : tg.negatives[l]) negs.push_back(z[l].row(i).dot(z[l].row(n)) / temperature);
      for (Eigen::Index j : p) {
        if (j != i) loss += pair_term(z[l].row(i).dot(z[l].row(j)) / temperature, negs);
      }
    }
  }
  return loss;
}

double cross_scale_loss(const std::vector<Eigen::MatrixXd>& z, const PyramidTargets& tg, double temperature) {
  check_temperature(temperature);
  tg.validate(z);
  if (tg.levels() == 0 || tg.positives[0].empty()) throw PreconditionError("cross_scale_loss: empty anchor set P(0)");
  double loss = 0.0;
  for (Eigen::Index i : tg.positives[0]) {
    for (std::size_t l = 1; l < tg.levels(); ++l) {
      std::vector<double> negs;
      for (Eigen::Index n : tg.negatives[l]) negs.push_back(z[0].row(i).dot(z[l].row(n)) / temperature);
      for (Eigen::Index j : tg.positives[l]) loss += pair_term(z[0].row(i).dot(z[l].row(j)) / temperature, negs);
    }
  }
  return loss;
}

double symmetric_kl_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("symmetric_kl_rows: shapes differ");
  const Eigen::MatrixXd lp = log_softmax_rows(x);
  const Eigen::MatrixXd lq = log_softmax_rows(y);
  return ((lp.array().exp() - lq.array().exp()) * (lp - lq).array()).sum();
}

double c3_loss(const Eigen::MatrixXd& j_v, const Eigen::MatrixXd& j_w) {
  if (j_v.cols() != j_w.cols()) throw ShapeError("c3_loss: J_v and J_w widths differ");
  if (j_v.rows() < 1 || j_w.rows() < 1) throw PreconditionError("c3_loss: empty token set");
  const Eigen::MatrixXd g_vw = j_v * j_w.transpose();
  const Eigen::MatrixXd r_vv = g_vw * (j_w * j_w.transpose()) * g_vw.transpose();
  return symmetric_kl_rows(r_vv, j_v * j_v.transpose());
}

double focal_loss(double p, int target, double gamma) {
  if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("focal_loss: probability outside [0, 1]");
  if (target != 0 && target != 1) throw PreconditionError("focal_loss: target must be 0 or 1");
  if (!(gamma >= 0.0)) throw PreconditionError("focal_loss: gamma must be nonnegative");
  if (target == 1) return p == 1.0 ? 0.0 : -std::pow(1.0 - p, gamma) * std::log(p);
  return p == 0.0 ? 0.0 : -std::pow(p, gamma) * std::log1p(-p);
}

double diou_1d(const Span& pred, const Span& gt) {
  check_span(pred);
  check_span(gt);
  const double inter = std::max(0.0, std::min(pred.end, gt.end) - std::max(pred.start, gt.start));
  const double uni = (pred.end - pred.start) + (gt.end - gt.start) - inter;
  const double enclosing = std::max(pred.end, gt.end) - std::min(pred.start, gt.start);
  if (!(uni > 0.0) || !(enclosing > 0.0)) throw PreconditionError("diou_1d: zero-length union");
  const double d = 0.5 * ((pred.start + pred.end) - (gt.start + gt.end));
  return 1.0 - inter / uni + d * d / (enclosing * enclosing);
}

double combined_grounding_objective(double l_cls, double l_reg, double l_within, double l_cross, double rho_reg,
                                    double rho_within, double rho_cross) {
  if (rho_reg < 0.0 || rho_within < 0.0 || rho_cross < 0.0) throw PreconditionError("loss weights must be >= 0");
  return l_cls + rho_reg * l_reg + rho_within * l_within + rho_cross * l_cross;
}

namespace graph {
namespace {

// sum over (i, j) of softplus(q_i - s_ij), optionally skipping i == j.
ad::Var contrast_block(ad::Var anchors, ad::Var positives, ad::Var negatives, double temperature, bool skip_diagonal) {
  ad::Graph& g = *anchors.graph();
  ad::Var s = ad::matmul(anchors, ad::transpose(positives)) / temperature;
  ad::Var q = ad::logsumexp_rows(ad::matmul(anchors, ad::transpose(negatives)) / temperature);
  ad::Var m = ad::matmul(q, g.constant(Eigen::MatrixXd::Ones(1, s.cols()))) - s;
  ad::Var terms = ad::softplus(m);
  if (skip_diagonal) {
    Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(s.rows(), s.cols());
    mask.diagonal().setZero();
    terms = terms * g.constant(mask);
  }
  return ad::sum(terms);
}

ad::Var accumulate(ad::Graph& g, const std::vector<ad::Var>& parts) {
  if (parts.empty()) return g.constant(0.0);
  ad::Var total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = total + parts[i];
  return total;
}

}  // namespace

ad::Var motion_contrastive_loss(ad::Var sims) {
  if (sims.rows() != 1) throw ShapeError("motion_contrastive_loss: expected a row of similarities");
  return ad::logsumexp_rows(sims) - ad::element(sims, 0, 0);
}

ad::Var within_scale_loss(const std::vector<ad::Var>& z, const PyramidTargets& tg, double temperature) {
  check_temperature(temperature);
  if (z.empty()) throw PreconditionError("within_scale_loss: empty pyramid");
  if (tg.levels() > z.size()) throw PreconditionError("within_scale_loss: more target levels than features");
  ad::Graph& g = *z.front().graph();
  std::vector<ad::Var> parts;
  for (std::size_t l = 1; l < tg.levels(); ++l) {
    if (tg.positives[l].size() < 2 || tg.negatives[l].empty()) continue;
    ad::Var p = ad::gather_rows(z[l], tg.positives[l]);
    parts.push_back(contrast_block(p, p, ad::gather_rows(z[l], tg.negatives[l]), temperature, true));
  }
  return accumulate(g, parts);
}

ad::Var cross_scale_loss(const std::vector<ad::Var>& z, const PyramidTargets& tg, double temperature) {
  check_temperature(temperature);
  if (z.empty() || tg.levels() == 0 || tg.positives[0].empty()) {
    throw PreconditionError("cross_scale_loss: empty anchor set P(0)");
  }
  if (tg.levels() > z.size()) throw PreconditionError("cross_scale_loss: more target levels than features");
  ad::Graph& g = *z.front().graph();
  ad::Var anchors = ad::gather_rows(z[0], tg.positives[0]);
  std::vector<ad::Var> parts;
  for (std::size_t l = 1; l < tg.levels(); ++l) {
    if (tg.positives[l].empty() || tg.negatives[l].empty()) continue;
    parts.push_back(contrast_block(anchors, ad::gather_rows(z[l], tg.positives[l]),
                                   ad::gather_rows(z[l], tg.negatives[l]), temperature, false));
  }
  return accumulate(g, parts);
}

ad::Var c3_loss(ad::Var j_v, ad::Var j_w) {
  ad::Var g_vw = ad::matmul(j_v, ad::transpose(j_w));
  ad::Var r_vv = ad::matmul(ad::matmul(g_vw, ad::matmul(j_w, ad::transpose(j_w))), ad::transpose(g_vw));
  ad::Var lp = ad::log_softmax_rows(r_vv);
  ad::Var lq = ad::log_softmax_rows(ad::matmul(j_v, ad::transpose(j_v)));
  return ad::sum((ad::exp(lp) - ad::exp(lq)) * (lp - lq));
}

ad::Var focal_loss(ad::Var p, const Eigen::MatrixXd& targets, double gamma) {
  if (p.rows() != targets.rows() || p.cols() != targets.cols()) throw ShapeError("focal_loss: target shape");
  ad::Graph& g = *p.graph();
  ad::Var t = g.constant(targets);
  ad::Var pos = ad::pow(1.0 - p, gamma) * ad::log(p);
  ad::Var neg = ad::pow(p, gamma) * ad::log(1.0 - p);
  return -ad::sum(t * pos + (1.0 - t) * neg);
}

ad::Var diou_1d(ad::Var pred, const Span& gt) {
  if (pred.rows() != 1 || pred.cols() != 2) throw ShapeError("diou_1d: pred must be 1 x 2");
  check_span(gt);
  ad::Graph& g = *pred.graph();
  ad::Var s1 = ad::element(pred, 0, 0), e1 = ad::element(pred, 0, 1);
  ad::Var s2 = g.constant(gt.start), e2 = g.constant(gt.end);
  ad::Var inter = ad::maximum(ad::minimum(e1, e2) - ad::maximum(s1, s2), g.constant(0.0));
  ad::Var uni = (e1 - s1) + (e2 - s2) - inter;
  ad::Var enclosing = ad::maximum(e1, e2) - ad::minimum(s1, s2);
  ad::Var d = 0.5 * ((s1 + e1) - (s2 + e2));
  return 1.0 - inter / uni + ad::square(d) / ad::square(enclosing);
}

}  // namespace graph
}  // namespace tvu
