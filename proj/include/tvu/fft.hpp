#pragma once

#include <Eigen/Core>

namespace tvu {

/// Causal linear convolution y_t = sum_{j<=t} kernel_j * x_{t-j}, truncated to x.size().
///
/// Computed with a zero-padded FFT whose length is the next power of two
/// >= kernel.size() + x.size() - 1. Entries of the kernel beyond x.size()
/// never contribute.
Eigen::VectorXd fft_convolve(const Eigen::Ref<const Eigen::VectorXd>& kernel,
                             const Eigen::Ref<const Eigen::VectorXd>& x);

/// Column-wise causal convolution: column c of `signals` (L x C) is convolved
/// with row c of `kernels` (C x K). Returns L x C.
Eigen::MatrixXd fft_convolve_columns(const Eigen::Ref<const Eigen::MatrixXd>& kernels,
                                     const Eigen::Ref<const Eigen::MatrixXd>& signals);

}  // namespace tvu
