#include "tvu/fft.hpp"

#include <algorithm>
#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "tvu/errors.hpp"

namespace tvu {
namespace {

Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Plans are cached per size inside Eigen::FFT; one instance per thread.
Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine = [] {
    Eigen::FFT<double> e;
    e.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return e;
  }();
  return engine;
}

// Linear convolution of equal-length columns through one set of buffers.
class Convolver {
 public:
  explicit Convolver(Eigen::Index nfft) : a_(nfft), b_(nfft) {}

  void apply(const double* kernel, Eigen::Index k, Eigen::Index kstride, const double* x, Eigen::Index n,
             double* y) {
    std::fill(a_.begin(), a_.end(), 0.0);
    std::fill(b_.begin(), b_.end(), 0.0);
    for (Eigen::Index i = 0; i < k; ++i) a_[i] = kernel[i * kstride];
    std::copy(x, x + n, b_.begin());
    auto& fft = fft_engine();
    fft.fwd(fa_, a_);
    fft.fwd(fb_, b_);
    for (std::size_t i = 0; i < fa_.size(); ++i) fa_[i] *= fb_[i];
    fft.inv(out_, fa_, static_cast<Eigen::Index>(a_.size()));
    std::copy(out_.begin(), out_.begin() + n, y);
  }

 private:
  std::vector<double> a_, b_, out_;
  std::vector<std::complex<double>> fa_, fb_;
};

// the real-input transform needs an even length
Eigen::Index fft_length(Eigen::Index n, Eigen::Index k) { return next_pow2(std::max<Eigen::Index>(2, n + k - 1)); }

}  // namespace

Eigen::VectorXd fft_convolve(const Eigen::Ref<const Eigen::VectorXd>& kernel,
                             const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::Index n = x.size();
  if (n == 0) return Eigen::VectorXd();
  const Eigen::Index k = std::min(kernel.size(), n);
  if (k == 0) return Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y(n);
  Convolver(fft_length(n, k)).apply(kernel.data(), k, kernel.innerStride(), x.data(), n, y.data());
  return y;
}

Eigen::MatrixXd fft_convolve_columns(const Eigen::Ref<const Eigen::MatrixXd>& kernels,
                                     const Eigen::Ref<const Eigen::MatrixXd>& signals) {
  if (kernels.rows() != signals.cols()) {
    throw ShapeError("fft_convolve_columns: kernel rows must equal signal columns");
  }
  const Eigen::Index n = signals.rows();
  const Eigen::Index k = std::min(kernels.cols(), n);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, signals.cols());
  if (n == 0 || k == 0) return y;
  Convolver conv(fft_length(n, k));
  for (Eigen::Index c = 0; c < signals.cols(); ++c) {
    conv.apply(kernels.data() + c * kernels.innerStride(), k, kernels.outerStride(),
               signals.data() + c * signals.outerStride(), n, &y(0, c));
  }
  return y;
}

}  // namespace tvu
