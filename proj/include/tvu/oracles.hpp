#pragma once

// Brute-force reference implementations used to check the library.

#include <Eigen/Core>
#include <vector>

#include "tvu/grounding.hpp"

namespace tvu::oracle {

/// y_t = sum_{j<=t} k_j x_{t-j}, O(L^2).
Eigen::VectorXd direct_convolve(const Eigen::VectorXd& kernel, const Eigen::VectorXd& x);

/// Greedy NMS that suppresses any candidate with positive overlap.
std::vector<MomentSpan> hard_nms(const std::vector<MomentSpan>& candidates, std::size_t keep_n);

/// Density-peak selection by explicit enumeration (self excluded from KNN, squared norms).
std::vector<Eigen::Index> keyframes_exhaustive(const Eigen::MatrixXd& features, Eigen::Index k, Eigen::Index q);

/// softmax(Q K' / sqrt(d)) V with Q = K = V = x. Quadratic reference for timing.
Eigen::MatrixXd self_attention(const Eigen::MatrixXd& x);

}  // namespace tvu::oracle
