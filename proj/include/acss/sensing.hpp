#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "acss/error.hpp"
#include "acss/fft.hpp"
#include "acss/rng.hpp"
#include "acss/signal_model.hpp"
#include "acss/types.hpp"

namespace acss {

enum class MatrixDistribution { gaussian_standard, bernoulli_pm1 };

struct RandomMatrixSpec {
  Index rows = 0;
  Index cols = 0;
  MatrixDistribution distribution = MatrixDistribution::gaussian_standard;
  std::uint64_t seed = 0;
};

namespace detail {

template <class Fill>
void fill_random(RealMatrix& m, MatrixDistribution dist, std::uint64_t seed, Fill&& at) {
  Rng rng(seed);
  if (dist == MatrixDistribution::gaussian_standard) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) at(i, j) = normal(rng);
  } else {
    // One bit per entry, +1 or -1 with probability 1/2.
    std::uint64_t word = 0;
    int left = 0;
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) {
        if (left == 0) {
          word = rng();
          left = 64;
        }
        at(i, j) = (word & 1u) ? 1.0 : -1.0;
        word >>= 1;
        --left;
      }
  }
}

}  // namespace detail

/// i.i.d. N(0,1) or +-1 entries, filled in row-major order from the seed, so
/// the matrix is bit-reproducible from (seed, dims, distribution).
inline RealMatrix draw_matrix(const RandomMatrixSpec& spec) {
  detail::require(spec.rows >= 1 && spec.cols >= 1, ErrorKind::parameter,
                  "matrix dimensions must be positive");
  detail::require(spec.rows <= spec.cols, ErrorKind::sub_nyquist_violation,
                  "measurement matrix must not have more rows than columns");
  RealMatrix m(spec.rows, spec.cols);
  detail::fill_random(m, spec.distribution, spec.seed,
                      [&m](Index i, Index j) -> double& { return m(i, j); });
  return m;
}

/// A matrix whose row blocks only touch their own column block: rows
/// [s*rows_per_block, (s+1)*rows_per_block) are nonzero on columns
/// [s*cols_per_block, (s+1)*cols_per_block). Block s is drawn from
/// derive_seed(seed, s), so growing the number of blocks keeps earlier blocks.
inline RealMatrix draw_causal_block_matrix(Index blocks, Index rows_per_block, Index cols_per_block,
                                           MatrixDistribution dist, std::uint64_t seed) {
  detail::require(rows_per_block <= cols_per_block, ErrorKind::sub_nyquist_violation,
                  "block must not have more rows than columns");
  RealMatrix m = RealMatrix::Zero(blocks * rows_per_block, blocks * cols_per_block);
  for (Index s = 0; s < blocks; ++s) {
    RealMatrix block = draw_matrix({rows_per_block, cols_per_block, dist, derive_seed(seed, std::uint64_t(s))});
    m.block(s * rows_per_block, s * cols_per_block, rows_per_block, cols_per_block) = block;
  }
  return m;
}

enum class SplitAssignment { tail_rows, random_rows };

struct SplitPolicy {
  Index testing_size = 0;
  SplitAssignment assignment = SplitAssignment::tail_rows;
  std::uint64_t seed = 0;
};

struct RowSplit {
  std::vector<Index> training;
  std::vector<Index> testing;
};

inline RowSplit split_rows(Index total_rows, const SplitPolicy& policy) {
  detail::require(policy.testing_size > 0 && policy.testing_size < total_rows,
                  ErrorKind::invalid_split,
                  "testing size " + std::to_string(policy.testing_size) + " must lie in (0, " +
                      std::to_string(total_rows) + ")");
  RowSplit out;
  if (policy.assignment == SplitAssignment::tail_rows) {
    const Index r = total_rows - policy.testing_size;
    out.training.resize(r);
    out.testing.resize(policy.testing_size);
    std::iota(out.training.begin(), out.training.end(), Index{0});
    std::iota(out.testing.begin(), out.testing.end(), r);
    return out;
  }
  std::vector<Index> perm(total_rows);
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(policy.seed);
  // Explicit Fisher-Yates: std::shuffle's draw pattern is not pinned down.
  for (Index i = total_rows - 1; i > 0; --i) {
    const Index j = Index(rng() % std::uint64_t(i + 1));
    std::swap(perm[i], perm[j]);
  }
  out.testing.assign(perm.begin(), perm.begin() + policy.testing_size);
  out.training.assign(perm.begin() + policy.testing_size, perm.end());
  std::sort(out.testing.begin(), out.testing.end());
  std::sort(out.training.begin(), out.training.end());
  return out;
}

inline RealMatrix select_rows(const RealMatrix& m, const std::vector<Index>& rows) {
  RealMatrix out(Index(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(Index(i)) = m.row(rows[i]);
  return out;
}

/// One time step's compressive data.
struct MeasurementSet {
  ComplexVector training;  // R_p
  ComplexVector testing;   // V_p
  RealMatrix phi;          // r_p x pN
  RealMatrix psi;          // v_p x pN
  double noise_std = 0.0;
  int step_index = 1;
  Index step_nyquist_count = 0;  // N

  Index training_size() const { return training.size(); }
  Index testing_size() const { return testing.size(); }
  Index total_size() const { return training.size() + testing.size(); }
  Index spectrum_length() const { return phi.cols(); }
};

namespace detail {

// Circular complex noise with independent N(0, sigma^2) real and imaginary
// parts, so |n| is Rayleigh with scale sigma.
inline void add_complex_noise(ComplexVector& v, double sigma, Rng& rng) {
  if (sigma == 0.0) return;
  std::normal_distribution<double> normal(0.0, sigma);
  for (Index i = 0; i < v.size(); ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    v[i] += Complex(re, im);
  }
}

}  // namespace detail

inline ComplexVector draw_complex_noise(Index n, double sigma, std::uint64_t seed) {
  ComplexVector v = ComplexVector::Zero(n);
  Rng rng(seed);
  detail::add_complex_noise(v, sigma, rng);
  return v;
}

/// training = phi x + n_R, testing = psi x + n_V. Noise is drawn from one
/// stream, training entries first.
inline MeasurementSet acquire(const TimeSeries& x, const RealMatrix& phi, const RealMatrix& psi,
                              double noise_std, std::uint64_t noise_seed) {
  detail::require(phi.cols() == x.size() && psi.cols() == x.size(), ErrorKind::dimension,
                  "matrix column count must equal the signal length");
  detail::require(noise_std >= 0, ErrorKind::parameter, "noise level must be nonnegative");
  MeasurementSet ms;
  ms.training = (phi * x.samples).cast<Complex>();
  ms.testing = (psi * x.samples).cast<Complex>();
  Rng rng(noise_seed);
  detail::add_complex_noise(ms.training, noise_std, rng);
  detail::add_complex_noise(ms.testing, noise_std, rng);
  ms.phi = phi;
  ms.psi = psi;
  ms.noise_std = noise_std;
  ms.step_nyquist_count = x.size();
  return ms;
}

/// A = phi * F^{-1}, materialized one row at a time: row r of A is the inverse
/// DFT of row r of phi, because F^{-1} is symmetric.
inline ComplexMatrix sensing_dictionary(const RealMatrix& phi, Index pN) {
  detail::require(phi.cols() == pN, ErrorKind::dimension,
                  "phi has " + std::to_string(phi.cols()) + " columns, expected " + std::to_string(pN));
  ComplexMatrix A(phi.rows(), pN);
  for (Index r = 0; r < phi.rows(); ++r) {
    const ComplexVector row = phi.row(r).transpose().cast<Complex>();
    A.row(r) = fft_inverse(row).transpose();
  }
  return A;
}

/// Matrix-free view of A = phi * F^{-1}; phi must outlive the view.
///   A^H g = (1/n) DFT(phi^T g)
///   A e_j = phi * f_j,  f_j[m] = exp(+i 2 pi j m / n) / n
class FourierDictionary {
 public:
  using Scalar = Complex;

  explicit FourierDictionary(const RealMatrix& phi) : phi_(&phi) {}

  Index rows() const { return phi_->rows(); }
  Index cols() const { return phi_->cols(); }

  ComplexVector correlate(const ComplexVector& g) const {
    detail::require(g.size() == rows(), ErrorKind::dimension, "residual length mismatch");
    Eigen::Matrix<double, Eigen::Dynamic, 2> parts(g.size(), 2);
    parts.col(0) = g.real();
    parts.col(1) = g.imag();
    const Eigen::Matrix<double, Eigen::Dynamic, 2> back = phi_->transpose() * parts;
    ComplexVector z(cols());
    z.real() = back.col(0);
    z.imag() = back.col(1);
    return fft_forward(z) / double(cols());
  }

  ComplexVector column(Index j) const {
    const Index n = cols();
    Eigen::Matrix<double, Eigen::Dynamic, 2> wave(n, 2);
    for (Index m = 0; m < n; ++m) {
      // Reduce j*m mod n first so the phase stays exact for large n.
      const double phase = 2 * kPi * double((j * m) % n) / double(n);
      wave(m, 0) = std::cos(phase) / double(n);
      wave(m, 1) = std::sin(phase) / double(n);
    }
    const Eigen::Matrix<double, Eigen::Dynamic, 2> out = (*phi_) * wave;
    ComplexVector c(rows());
    c.real() = out.col(0);
    c.imag() = out.col(1);
    return c;
  }

  const RealMatrix& phi() const { return *phi_; }

 private:
  const RealMatrix* phi_;
};

/// Plain dense dictionary over any scalar type; the matrix must outlive the view.
template <class S>
class DenseDictionary {
 public:
  using Scalar = S;

  explicit DenseDictionary(const Matrix<S>& a) : a_(&a) {}

  Index rows() const { return a_->rows(); }
  Index cols() const { return a_->cols(); }

  Vector<S> correlate(const Vector<S>& g) const {
    detail::require(g.size() == rows(), ErrorKind::dimension, "residual length mismatch");
    return a_->adjoint() * g;
  }
  Vector<S> column(Index j) const { return a_->col(j); }

 private:
  const Matrix<S>* a_;
};

}  // namespace acss
