#pragma once

// Temporal grounding utilities: temporal IoU, center sampling on a strided
// feature pyramid, moment decoding, Gaussian Soft-NMS and Recall@K.

#include <Eigen/Core>
#include <vector>

#include "tvu/errors.hpp"

namespace tvu {

struct MomentSpan {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;

  double length() const { return end - start; }
  void validate() const;
};

/// |a & b| / |a | b|; zero when the union is empty.
double tiou(const MomentSpan& a, const MomentSpan& b);

/// Level lengths ceil(T / 2^l) for l = 0..levels-1.
std::vector<Eigen::Index> pyramid_lengths(Eigen::Index t, int levels);

/// Indices c of level l (0-based, stride 2^l) with |2^l c - t| <= alpha T / T^l.
/// The index nearest to t is always included.
std::vector<Eigen::Index> center_sampling_targets(double t, int level, Eigen::Index length, double alpha);

enum class LevelOrigin { Zero, One };

struct LevelGrid {
  Eigen::VectorXd score;
  Eigen::VectorXd d_start;
  Eigen::VectorXd d_end;
};

/// Stored level k has stride 2^k. The origin only changes how levels are numbered.
struct PyramidGrid {
  Eigen::Index length = 0;  // T
  std::vector<LevelGrid> levels;
  LevelOrigin origin = LevelOrigin::One;

  static PyramidGrid zeros(Eigen::Index length, int levels, LevelOrigin origin = LevelOrigin::One);

  /// Stored position of a numbered level.
  int storage_index(int level) const;
  int label(int storage) const;
  double stride(int storage) const;
  void validate() const;
};

struct DecodedMoment {
  MomentSpan span;
  int level = 0;  // numbered per the grid's origin
  Eigen::Index step = 0;
};

/// Span of one cell: stride * (t - d_s), stride * (t + d_e).
MomentSpan decode_cell(const PyramidGrid& grid, int storage, Eigen::Index step);

/// Highest-scoring cell over all levels and steps (ties: lower level, then lower step).
DecodedMoment decode_moment(const PyramidGrid& grid);

/// Every cell scoring above `threshold`, ordered by level then step.
std::vector<MomentSpan> decode_all(const PyramidGrid& grid, double threshold);

struct SoftNmsOptions {
  double sigma = 0.5;
  std::size_t keep_n = 100;
  double score_floor = 1e-3;
};

/// Gaussian Soft-NMS: take the best, decay the rest by exp(-tiou^2 / sigma).
std::vector<MomentSpan> soft_nms(const std::vector<MomentSpan>& candidates, const SoftNmsOptions& options = {});

/// Percentage of queries whose top-K predictions reach tIoU >= theta.
double recall_at_k(const std::vector<std::vector<MomentSpan>>& ranked, const std::vector<MomentSpan>& gt,
                   std::size_t k, double theta);

}  // namespace tvu
