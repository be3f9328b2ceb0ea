#include "tvu/keyframe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tvu/errors.hpp"

namespace tvu {
namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& h) {
  const Eigen::Index n = h.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (h.row(i) - h.row(j)).squaredNorm();
  return d;
}

bool denser(const Eigen::VectorXd& d, Eigen::Index l, Eigen::Index j) { return d[l] > d[j] || (d[l] == d[j] && l < j); }

}  // namespace

void FrameSet::validate() const {
  const Eigen::Index n = size();
  if (n < 1) throw PreconditionError("FrameSet: no frames");
  if (k < 1 || k >= n) throw PreconditionError("FrameSet: need 1 <= K < N");
  if (q < 1 || q > n) throw PreconditionError("FrameSet: need 1 <= Q <= N");
  if (!features.allFinite()) throw PreconditionError("FrameSet: non-finite features");
}

Eigen::VectorXd local_density(const FrameSet& frames) {
  frames.validate();
  const Eigen::MatrixXd d2 = squared_distances(frames.features);
  const Eigen::Index n = frames.size();
  Eigen::VectorXd out(n);
  std::vector<double> row;
  for (Eigen::Index j = 0; j < n; ++j) {
    row.clear();
    for (Eigen::Index l = 0; l < n; ++l) {
      if (l != j || frames.knn_self == KnnSelf::Include) row.push_back(d2(j, l));
    }
    std::partial_sort(row.begin(), row.begin() + frames.k, row.end());
    const double mean = std::accumulate(row.begin(), row.begin() + frames.k, 0.0) / static_cast<double>(frames.k);
    out[j] = std::exp(-mean);
  }
  return out;
}

Eigen::VectorXd distance_index(const FrameSet& frames, const Eigen::VectorXd& density) {
  const Eigen::Index n = frames.size();
  if (density.size() != n) throw ShapeError("distance_index: density length differs from frame count");
  Eigen::MatrixXd dist = squared_distances(frames.features);
  if (frames.gamma_norm == GammaNorm::Plain) dist = dist.cwiseSqrt();
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    bool peak = true;
    double best = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      if (l == j || !denser(density, l, j)) continue;
      best = peak ? dist(j, l) : std::min(best, dist(j, l));
      peak = false;
    }
    gamma[j] = peak ? dist.row(j).maxCoeff() : best;
  }
  return gamma;
}

std::vector<Eigen::Index> select_keyframes(const FrameSet& frames) {
  const Eigen::VectorXd d = local_density(frames);
  const Eigen::VectorXd score = d.cwiseProduct(distance_index(frames, d));
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(frames.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return score[a] > score[b]; });
  idx.resize(static_cast<std::size_t>(frames.q));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace tvu
