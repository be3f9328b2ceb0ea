#include "tvu/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tvu/errors.hpp"

namespace tvu {

void MomentSpan::validate() const {
  if (!std::isfinite(start) || !std::isfinite(end) || end < start) {
    throw PreconditionError("MomentSpan: invalid span [" + std::to_string(start) + ", " + std::to_string(end) + "]");
  }
}

double tiou(const MomentSpan& a, const MomentSpan& b) {
  a.validate();
  b.validate();
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Eigen::Index> pyramid_lengths(Eigen::Index t, int levels) {
  if (t < 1 || levels < 1) throw PreconditionError("pyramid_lengths: need T >= 1 and at least one level");
  std::vector<Eigen::Index> out;
  for (int l = 0; l < levels; ++l) {
    const Eigen::Index stride = Eigen::Index{1} << l;
    out.push_back((t + stride - 1) / stride);
  }
  return out;
}

std::vector<Eigen::Index> center_sampling_targets(double t, int level, Eigen::Index length, double alpha) {
  if (!(alpha > 0.0)) throw PreconditionError("center_sampling_targets: alpha must be positive");
  if (level < 0) throw PreconditionError("center_sampling_targets: negative level");
  const Eigen::Index len = pyramid_lengths(length, level + 1).back();
  const double stride = std::ldexp(1.0, level);
  const double radius = alpha * static_cast<double>(length) / static_cast<double>(len);

  Eigen::Index nearest = 0;
  for (Eigen::Index c = 1; c < len; ++c) {
    if (std::abs(stride * c - t) < std::abs(stride * nearest - t)) nearest = c;
  }
  std::vector<Eigen::Index> out;
  for (Eigen::Index c = 0; c < len; ++c) {
    if (c == nearest || std::abs(stride * c - t) <= radius) out.push_back(c);
  }
  return out;
}

PyramidGrid PyramidGrid::zeros(Eigen::Index length, int levels, LevelOrigin origin) {
  PyramidGrid g;
  g.length = length;
  g.origin = origin;
  for (Eigen::Index n : pyramid_lengths(length, levels)) {
    g.levels.push_back({Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)});
  }
  return g;
}

int PyramidGrid::storage_index(int level) const {
  const int k = origin == LevelOrigin::One ? level - 1 : level;
  if (k < 0 || k >= static_cast<int>(levels.size())) throw PreconditionError("PyramidGrid: no level " + std::to_string(level));
  return k;
}

int PyramidGrid::label(int storage) const { return origin == LevelOrigin::One ? storage + 1 : storage; }

double PyramidGrid::stride(int storage) const { return std::ldexp(1.0, storage); }

void PyramidGrid::validate() const {
  if (levels.empty()) throw PreconditionError("PyramidGrid: no levels");
  const auto lens = pyramid_lengths(length, static_cast<int>(levels.size()));
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto& lv = levels[k];
    if (lv.score.size() != lens[k] || lv.d_start.size() != lens[k] || lv.d_end.size() != lens[k]) {
      throw ShapeError("PyramidGrid: level " + std::to_string(k) + " should have " + std::to_string(lens[k]) + " cells");
    }
  }
}

MomentSpan decode_cell(const PyramidGrid& grid, int storage, Eigen::Index step) {
  const LevelGrid& lv = grid.levels.at(static_cast<std::size_t>(storage));
  const double s = grid.stride(storage);
  const double t = static_cast<double>(step);
  return {s * (t - lv.d_start[step]), s * (t + lv.d_end[step]), lv.score[step]};
}

DecodedMoment decode_moment(const PyramidGrid& grid) {
  grid.validate();
  int best_level = 0;
  Eigen::Index best_step = 0;
  double best = grid.levels[0].score[0];
  for (std::size_t k = 0; k < grid.levels.size(); ++k) {
    const Eigen::VectorXd& p = grid.levels[k].score;
    for (Eigen::Index t = 0; t < p.size(); ++t) {
      if (p[t] > best) {
        best = p[t];
        best_level = static_cast<int>(k);
        best_step = t;
      }
    }
  }
  return {decode_cell(grid, best_level, best_step), grid.label(best_level), best_step};
}

std::vector<MomentSpan> decode_all(const PyramidGrid& grid, double threshold) {
  grid.validate();
  std::vector<MomentSpan> out;
  for (std::size_t k = 0; k < grid.levels.size(); ++k) {
    for (Eigen::Index t = 0; t < grid.levels[k].score.size(); ++t) {
      if (grid.levels[k].score[t] > threshold) out.push_back(decode_cell(grid, static_cast<int>(k), t));
    }
  }
  return out;
}

std::vector<MomentSpan> soft_nms(const std::vector<MomentSpan>& candidates, const SoftNmsOptions& opt) {
  if (!(opt.sigma > 0.0)) throw PreconditionError("soft_nms: sigma must be positive");
  std::vector<MomentSpan> pool = candidates;
  for (const auto& c : pool) c.validate();
  std::vector<MomentSpan> kept;
  while (!pool.empty() && kept.size() < opt.keep_n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      if (pool[i].score > pool[best].score) best = i;
    }
    const MomentSpan top = pool[best];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    kept.push_back(top);
    std::vector<MomentSpan> rest;
    for (MomentSpan c : pool) {
      const double o = tiou(top, c);
      c.score *= std::exp(-o * o / opt.sigma);
      if (c.score >= opt.score_floor) rest.push_back(c);
    }
    pool = std::move(rest);
  }
  return kept;
}

double recall_at_k(const std::vector<std::vector<MomentSpan>>& ranked, const std::vector<MomentSpan>& gt,
                   std::size_t k, double theta) {
  if (k < 1) throw PreconditionError("recall_at_k: K must be >= 1");
  if (ranked.size() != gt.size()) throw ShapeError("recall_at_k: one prediction list per query expected");
  if (gt.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < gt.size(); ++q) {
    const std::size_t n = std::min(k, ranked[q].size());
    for (std::size_t i = 0; i < n; ++i) {
      if (tiou(ranked[q][i], gt[q]) >= theta) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gt.size());
}

}  // namespace tvu
