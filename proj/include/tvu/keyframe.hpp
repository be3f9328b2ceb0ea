#pragma once

// Density-peak key-frame selection: frames are ranked by local density times
// the distance to the nearest denser frame.

#include <Eigen/Core>
#include <vector>

#include "tvu/errors.hpp"

namespace tvu {

enum class KnnSelf { Exclude, Include };
enum class GammaNorm { Squared, Plain };

struct FrameSet {
  Eigen::MatrixXd features;  // N x D
  Eigen::Index k = 1;        // neighbours
  Eigen::Index q = 1;        // keys to select
  KnnSelf knn_self = KnnSelf::Exclude;
  GammaNorm gamma_norm = GammaNorm::Squared;

  Eigen::Index size() const { return features.rows(); }
  void validate() const;
};

/// d_j = exp(-mean squared distance to the K nearest neighbours).
Eigen::VectorXd local_density(const FrameSet& frames);

/// Squared distance to the nearest denser frame; the densest frame takes the
/// largest squared distance to any frame. Equal densities rank the lower index
/// as denser.
Eigen::VectorXd distance_index(const FrameSet& frames, const Eigen::VectorXd& density);

/// Q indices with the largest d * gamma (ties to the lower index), ascending.
std::vector<Eigen::Index> select_keyframes(const FrameSet& frames);

}  // namespace tvu
