#include "tvu/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace tvu::oracle {

Eigen::VectorXd direct_convolve(const Eigen::VectorXd& kernel, const Eigen::VectorXd& x) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index t = 0; t < x.size(); ++t)
    for (Eigen::Index j = 0; j <= t && j < kernel.size(); ++j) y[t] += kernel[j] * x[t - j];
  return y;
}

std::vector<MomentSpan> hard_nms(const std::vector<MomentSpan>& candidates, std::size_t keep_n) {
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return candidates[a].score > candidates[b].score; });
  std::vector<MomentSpan> kept;
  for (std::size_t i : order) {
    if (kept.size() == keep_n) break;
    bool clear = true;
    for (const auto& k : kept) clear = clear && tiou(k, candidates[i]) == 0.0;
    if (clear) kept.push_back(candidates[i]);
  }
  return kept;
}

std::vector<Eigen::Index> keyframes_exhaustive(const Eigen::MatrixXd& h, Eigen::Index k, Eigen::Index q) {
  const Eigen::Index n = h.rows();
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < h.cols(); ++c) s += (h(i, c) - h(j, c)) * (h(i, c) - h(j, c));
      dist[i][j] = s;
    }

  std::vector<double> density(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    std::vector<double> others;
    for (Eigen::Index l = 0; l < n; ++l)
      if (l != j) others.push_back(dist[j][l]);
    std::sort(others.begin(), others.end());
    double s = 0.0;
    for (Eigen::Index m = 0; m < k; ++m) s += others[m];
    density[j] = std::exp(-s / static_cast<double>(k));
  }

  // Rank frames by density, lower index first on ties; everything ranked
  // before j is "denser" than j.
  std::vector<Eigen::Index> rank(n);
  for (Eigen::Index i = 0; i < n; ++i) rank[i] = i;
  std::stable_sort(rank.begin(), rank.end(), [&](Eigen::Index a, Eigen::Index b) { return density[a] > density[b]; });

  std::vector<std::pair<double, Eigen::Index>> scored;
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    const Eigen::Index j = rank[pos];
    double gamma;
    if (pos == 0) {
      gamma = *std::max_element(dist[j].begin(), dist[j].end());
    } else {
      gamma = dist[j][rank[0]];
      for (Eigen::Index p = 1; p < pos; ++p) gamma = std::min(gamma, dist[j][rank[p]]);
    }
    scored.emplace_back(density[j] * gamma, j);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < q; ++i) out.push_back(scored[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::MatrixXd self_attention(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd s = x * x.transpose() / std::sqrt(static_cast<double>(x.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    s.row(i) = (s.row(i).array() - s.row(i).maxCoeff()).exp();
    s.row(i) /= s.row(i).sum();
  }
  return s * x;
}

}  // namespace tvu::oracle
