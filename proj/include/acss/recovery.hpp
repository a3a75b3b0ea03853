#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "acss/error.hpp"
#include "acss/sensing.hpp"
#include "acss/signal_model.hpp"
#include "acss/types.hpp"
#include "acss/validation.hpp"

namespace acss {

/// Anything OMP can search: A^H g and single columns A e_j.
template <class D>
concept Dictionary = requires(const D& d, const Vector<typename D::Scalar>& g, Index j) {
  typename D::Scalar;
  { d.rows() } -> std::convertible_to<Index>;
  { d.cols() } -> std::convertible_to<Index>;
  { d.correlate(g) } -> std::convertible_to<Vector<typename D::Scalar>>;
  { d.column(j) } -> std::convertible_to<Vector<typename D::Scalar>>;
};

enum class HaltReason { criterion, k_max_exhausted, fixed_k };

inline const char* to_string(HaltReason r) {
  switch (r) {
    case HaltReason::criterion: return "criterion";
    case HaltReason::k_max_exhausted: return "k_max_exhausted";
    case HaltReason::fixed_k: return "fixed_k";
  }
  return "unknown";
}

template <class S>
struct RecoveryResult {
  Vector<S> estimate;           // zero outside support
  std::vector<Index> support;   // in selection order
  int iterations = 0;
  std::vector<double> rho_trace;       // rho after iteration t = 1, 2, ...
  std::vector<double> residual_trace;  // ||gamma^t||_2 after iteration t
  HaltReason halted_by = HaltReason::fixed_k;
  bool rank_deficient = false;
  bool repeated_atom = false;
  double final_rho = 0.0;
};

using SpectralRecovery = RecoveryResult<Complex>;

inline Spectrum to_spectrum(const SpectralRecovery& r, double bin_resolution_hz) {
  return Spectrum{r.estimate, bin_resolution_hz};
}

template <class S>
struct LeastSquaresFit {
  Vector<S> estimate;
  bool rank_deficient = false;
};

/// Minimum-norm least squares over the columns in `support`, through a
/// complete orthogonal decomposition with relative rank tolerance 1e-10.
template <class S>
LeastSquaresFit<S> least_squares_on_support(const Vector<S>& training, const Matrix<S>& A,
                                            const std::vector<Index>& support) {
  detail::require(training.size() == A.rows(), ErrorKind::dimension, "training length mismatch");
  detail::require(Index(support.size()) <= A.rows(), ErrorKind::parameter,
                  "support larger than the number of measurements");
  LeastSquaresFit<S> out{Vector<S>::Zero(A.cols()), false};
  if (support.empty()) return out;
  Matrix<S> sub(A.rows(), Index(support.size()));
  for (std::size_t i = 0; i < support.size(); ++i) {
    detail::require(support[i] >= 0 && support[i] < A.cols(), ErrorKind::parameter,
                    "support index out of range");
    sub.col(Index(i)) = A.col(support[i]);
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix<S>> cod;
  cod.setThreshold(1e-10);
  cod.compute(sub);
  const Vector<S> c = cod.solve(training);
  for (std::size_t i = 0; i < support.size(); ++i) out.estimate[support[i]] = c[Index(i)];
  out.rank_deficient = cod.rank() < Index(support.size());
  return out;
}

namespace detail {

/// Orthogonal matching pursuit kept in incremental QR form (classical
/// Gram-Schmidt with one reorthogonalization pass).
template <Dictionary D>
class GreedyPursuit {
 public:
  using S = typename D::Scalar;

  GreedyPursuit(const D& dict, const Vector<S>& training)
      : dict_(dict), training_(training), residual_(training) {
    require(training.size() == dict.rows(), ErrorKind::dimension, "training length mismatch");
    q_.resize(dict.rows(), 0);
    r_.resize(0, 0);
    training_norm_ = training.norm();
  }

  enum class Step { added, repeated, dependent, exact };

  /// Picks the atom most correlated with the residual (lowest index on ties)
  /// and refits.
  Step step() {
    if (residual_.norm() <= 1e-12 * training_norm_) return Step::exact;
    const Vector<S> corr = dict_.correlate(residual_);
    Index best = 0;
    double best_mag = -1.0;
    for (Index j = 0; j < corr.size(); ++j) {
      const double m = std::abs(corr[j]);
      if (m > best_mag) {
        best_mag = m;
        best = j;
      }
    }
    if (std::find(support_.begin(), support_.end(), best) != support_.end()) return Step::repeated;

    const Vector<S> a = dict_.column(best);
    Vector<S> w = a;
    Vector<S> proj = Vector<S>::Zero(q_.cols());
    for (int pass = 0; pass < 2 && q_.cols() > 0; ++pass) {
      const Vector<S> h = q_.adjoint() * w;
      w -= q_ * h;
      proj += h;
    }
    const double wn = w.norm();
    if (!(wn > 1e-10 * a.norm())) return Step::dependent;
    const Index t = q_.cols();
    q_.conservativeResize(Eigen::NoChange, t + 1);
    q_.col(t) = w / wn;
    Matrix<S> grown = Matrix<S>::Zero(t + 1, t + 1);
    grown.topLeftCorner(t, t) = r_;
    grown.col(t).head(t) = proj;
    grown(t, t) = S(wn);
    r_ = std::move(grown);
    // Project the full training vector (not the previous residual) so the
    // residual stays orthogonal to every chosen column.
    z_.conservativeResize(t + 1);
    z_[t] = q_.col(t).dot(training_);
    residual_ = training_ - q_ * z_;
    support_.push_back(best);
    return Step::added;
  }

  Vector<S> coefficients() const {
    if (support_.empty()) return Vector<S>();
    return r_.template triangularView<Eigen::Upper>().solve(z_);
  }

  Vector<S> estimate() const {
    Vector<S> x = Vector<S>::Zero(dict_.cols());
    const Vector<S> c = coefficients();
    for (std::size_t i = 0; i < support_.size(); ++i) x[support_[i]] = c[Index(i)];
    return x;
  }

  const std::vector<Index>& support() const { return support_; }
  const Vector<S>& residual() const { return residual_; }
  double training_norm() const { return training_norm_; }

 private:
  const D& dict_;
  const Vector<S>& training_;
  Vector<S> residual_;
  Matrix<S> q_;
  Matrix<S> r_;
  Vector<S> z_;
  std::vector<Index> support_;
  double training_norm_ = 0.0;
};

template <class S, class P>
void note_stop(RecoveryResult<S>& out, typename GreedyPursuit<P>::Step s) {
  using Step = typename GreedyPursuit<P>::Step;
  if (s == Step::repeated) {
    out.repeated_atom = true;
    out.halted_by = HaltReason::k_max_exhausted;
  } else if (s == Step::dependent) {
    out.rank_deficient = true;
    out.halted_by = HaltReason::k_max_exhausted;
  }
}

}  // namespace detail

/// Plain OMP with k iterations. It stops sooner only when the residual is
/// already zero (to 1e-12 relative), or when the next pick repeats an atom or
/// is linearly dependent on the support.
template <Dictionary D>
RecoveryResult<typename D::Scalar> omp(const Vector<typename D::Scalar>& training, const D& dict, int k) {
  using S = typename D::Scalar;
  detail::require(k >= 0, ErrorKind::parameter, "k must be nonnegative");
  detail::require(k <= dict.rows(), ErrorKind::parameter,
                  "k = " + std::to_string(k) + " exceeds the number of measurements");
  detail::GreedyPursuit<D> gp(dict, training);
  RecoveryResult<S> out;
  out.halted_by = HaltReason::fixed_k;
  for (int t = 0; t < k; ++t) {
    const auto s = gp.step();
    if (s != detail::GreedyPursuit<D>::Step::added) {
      detail::note_stop<S, D>(out, s);
      break;
    }
    out.residual_trace.push_back(gp.residual().norm());
  }
  out.support = gp.support();
  out.iterations = int(out.support.size());
  out.estimate = gp.estimate();
  return out;
}

template <class S>
RecoveryResult<S> omp(const Vector<S>& training, const Matrix<S>& A, int k) {
  return omp(training, DenseDictionary<S>(A), k);
}

/// Validation hook for sasr: given (t, support, coefficients in support
/// order) returns rho^t and whether the halting criterion holds.
template <class S>
using HaltingCheck = std::function<std::pair<double, bool>(int, const std::vector<Index>&, const Vector<S>&)>;

/// Greedy pursuit that stops as soon as `check` fires (evaluated for t >= 1)
/// or after k_max atoms. A zero training vector returns the zero estimate
/// without iterating.
template <Dictionary D>
RecoveryResult<typename D::Scalar> sasr(const Vector<typename D::Scalar>& training, const D& dict,
                                        int k_max, const HaltingCheck<typename D::Scalar>& check) {
  using S = typename D::Scalar;
  detail::require(k_max >= 0, ErrorKind::parameter, "k_max must be nonnegative");
  detail::GreedyPursuit<D> gp(dict, training);
  RecoveryResult<S> out;
  out.estimate = Vector<S>::Zero(dict.cols());
  if (gp.training_norm() == 0.0) {
    out.halted_by = HaltReason::criterion;
    out.final_rho = check(0, {}, Vector<S>()).first;
    return out;
  }
  out.halted_by = HaltReason::k_max_exhausted;
  const int limit = int(std::min<Index>(k_max, dict.rows()));
  for (int t = 1; t <= limit; ++t) {
    const auto s = gp.step();
    if (s == detail::GreedyPursuit<D>::Step::exact) {
      // Nothing left to explain; the current fit is final. Its rho was
      // already checked on the previous pass.
      break;
    }
    if (s != detail::GreedyPursuit<D>::Step::added) {
      detail::note_stop<S, D>(out, s);
      break;
    }
    out.residual_trace.push_back(gp.residual().norm());
    const auto [rho, halt] = check(t, gp.support(), gp.coefficients());
    out.rho_trace.push_back(rho);
    if (halt) {
      out.halted_by = HaltReason::criterion;
      break;
    }
  }
  out.support = gp.support();
  out.iterations = int(out.support.size());
  if (!out.support.empty()) out.estimate = gp.estimate();
  if (!out.rho_trace.empty()) out.final_rho = out.rho_trace.back();
  return out;
}

/// Rho threshold / accuracy in force for a measurement set, resolved from the
/// config (relative thresholds and confidence-derived accuracy depend on the
/// data sizes).
struct ResolvedHalting {
  HaltingMode mode = HaltingMode::noiseless;
  double rho_threshold = 0.0;  // noiseless
  bool unsatisfiable = false;  // noiseless, fixed-confidence bracket <= 0
  double center = 0.0;         // noisy: sqrt(pi/2) delta
  double accuracy = 0.0;       // noisy: theta

  bool holds(double rho) const {
    if (mode == HaltingMode::noiseless) return !unsatisfiable && rho <= rho_threshold;
    return std::abs(rho - center) <= accuracy;
  }
};

inline ResolvedHalting resolve_halting(const MeasurementSet& ms, const HaltingConfig& cfg) {
  cfg.validate();
  const Index p = ms.step_index;
  const Index N = ms.step_nyquist_count;
  detail::require(p >= 1 && N >= 1 && p * N == ms.spectrum_length(), ErrorKind::dimension,
                  "step index times per-step length must equal the spectrum length");
  ResolvedHalting h;
  h.mode = cfg.mode;
  if (cfg.mode == HaltingMode::noiseless) {
    double varpi = cfg.error_threshold;
    if (cfg.threshold_units == ThresholdUnits::relative && ms.training_size() > 0)
      varpi *= std::sqrt(double(p * N) * ms.training.squaredNorm() / double(ms.training_size()));
    const HaltDecision d = noiseless_threshold(varpi, p, N, ms.testing_size(), cfg);
    h.rho_threshold = d.threshold;
    h.unsatisfiable = d.unsatisfiable;
  } else {
    h.center = std::sqrt(kPi / 2) * cfg.noise_std;
    h.accuracy = effective_accuracy(cfg, ms.testing_size());
  }
  return h;
}

/// SASR on one step's measurements: atoms come from A = Phi F^{-1}, and after
/// every refit rho = ||V - Psi F^{-1} X_hat||_1 / v is checked against the
/// configured criterion. The true sparsity is never an input.
inline SpectralRecovery sasr(const MeasurementSet& ms, const HaltingConfig& cfg) {
  const ResolvedHalting h = resolve_halting(ms, cfg);
  detail::require(ms.testing_size() > 0, ErrorKind::parameter, "testing set is empty");
  const FourierDictionary train_dict(ms.phi);
  const FourierDictionary test_dict(ms.psi);
  // Columns of Psi F^{-1}, cached in support order.
  ComplexMatrix test_cols(ms.testing_size(), 0);
  const auto check = [&](int, const std::vector<Index>& support, const ComplexVector& coef) {
    double acc = 0.0;
    if (support.empty()) {
      acc = ms.testing.cwiseAbs().sum();
    } else {
      while (test_cols.cols() < Index(support.size())) {
        const Index c = test_cols.cols();
        test_cols.conservativeResize(Eigen::NoChange, c + 1);
        test_cols.col(c) = test_dict.column(support[std::size_t(c)]);
      }
      acc = (ms.testing - test_cols * coef).cwiseAbs().sum();
    }
    const double rho = acc / double(ms.testing_size());
    return std::make_pair(rho, h.holds(rho));
  };
  return sasr(ms.training, train_dict, cfg.max_sparsity, HaltingCheck<Complex>(check));
}

/// Exhaustive l0 search over supports of size <= k; the least-squares-optimal
/// one wins, smaller supports first, then lexicographic order. Test oracle
/// only, guarded to 24 columns and k <= 3.
template <class S>
Vector<S> brute_force_l0(const Vector<S>& training, const Matrix<S>& A, int k) {
  detail::require(A.cols() <= 24 && k >= 0 && k <= 3, ErrorKind::guard_violation,
                  "brute-force search limited to 24 columns and k <= 3");
  detail::require(training.size() == A.rows(), ErrorKind::dimension, "training length mismatch");
  Vector<S> best = Vector<S>::Zero(A.cols());
  double best_res = training.norm();
  const double tol = 1e-12 * std::max(1.0, training.norm());
  std::vector<Index> pick;
  // Visit all size-1 supports before size-2 and so on, so ties favour sparsity.
  for (int size = 1; size <= k; ++size) {
    std::function<void(Index, int)> exact = [&](Index from, int left) {
      if (left == 0) {
        if (Index(pick.size()) > A.rows()) return;
        const LeastSquaresFit<S> fit = least_squares_on_support(training, A, pick);
        const double res = (training - A * fit.estimate).norm();
        if (res < best_res - tol) {
          best_res = res;
          best = fit.estimate;
        }
        return;
      }
      for (Index j = from; j < A.cols(); ++j) {
        pick.push_back(j);
        exact(j + 1, left - 1);
        pick.pop_back();
      }
    };
    exact(0, size);
  }
  return best;
}

}  // namespace acss
