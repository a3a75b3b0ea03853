#pragma once

#include <unsupported/Eigen/FFT>

#include "acss/types.hpp"

namespace acss {
namespace detail {

// kissfft caches twiddles per transform length; one engine per thread keeps
// the cache warm without sharing mutable state across Monte Carlo workers.
inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

}  // namespace detail

/// Unnormalized forward DFT: X[m] = sum_n x[n] exp(-i 2 pi m n / N).
inline ComplexVector fft_forward(const ComplexVector& x) {
  ComplexVector out(x.size());
  if (x.size() == 0) return out;
  detail::fft_engine().fwd(out, x);
  return out;
}

inline ComplexVector fft_forward(const RealVector& x) {
  return fft_forward(ComplexVector(x.cast<Complex>()));
}

/// Inverse DFT carrying the 1/N factor.
inline ComplexVector fft_inverse(const ComplexVector& X) {
  ComplexVector out(X.size());
  if (X.size() == 0) return out;
  detail::fft_engine().inv(out, X);
  return out;
}

}  // namespace acss
