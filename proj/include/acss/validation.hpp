#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>

#include <json.hpp>

#include "acss/error.hpp"
#include "acss/fft.hpp"
#include "acss/rng.hpp"
#include "acss/sensing.hpp"
#include "acss/signal_model.hpp"
#include "acss/types.hpp"

namespace acss {

enum class HaltingMode { noiseless, noisy };

/// How error_threshold is read in noiseless mode.
///  - absolute: the bound on ||X - X_hat||_2 as given.
///  - relative: a fraction of the signal's spectral norm, converted at run
///    time to error_threshold * sqrt(pN * ||R||^2 / r_p). Gaussian rows keep
///    E|<phi_i, x>|^2 = ||x||^2, so ||R||^2 / r_p estimates ||x||^2 and
///    pN ||x||^2 = ||X||^2.
enum class ThresholdUnits { absolute, relative };

struct HaltingConfig {
  HaltingMode mode = HaltingMode::noiseless;
  double error_threshold = 1.0;  // varpi
  ThresholdUnits threshold_units = ThresholdUnits::absolute;
  double confidence_factor = 0.2;  // eta
  double jl_constant = 1.0;        // C
  std::optional<double> failure_prob;  // xi; selects the fixed-confidence criterion
  double noise_std = 0.0;              // delta
  double accuracy = 0.0;               // theta
  std::optional<double> confidence_floor;  // varrho; derives theta from v_p when set
  int max_sparsity = 80;                   // k_max

  void validate() const {
    using detail::require;
    require(max_sparsity >= 0, ErrorKind::parameter, "k_max must be nonnegative");
    require(jl_constant > 0, ErrorKind::parameter, "JL constant must be positive");
    if (mode == HaltingMode::noiseless) {
      require(error_threshold > 0, ErrorKind::parameter, "error threshold must be positive");
      require(confidence_factor > 0 && confidence_factor < 0.5, ErrorKind::parameter,
              "confidence factor must lie in (0, 1/2)");
      if (failure_prob)
        require(*failure_prob > 0 && *failure_prob < 1, ErrorKind::parameter,
                "failure probability must lie in (0, 1)");
    } else {
      require(noise_std > 0, ErrorKind::parameter, "noisy mode needs a positive noise level");
      require(accuracy > 0 || confidence_floor.has_value(), ErrorKind::parameter,
              "noisy mode needs an accuracy or a confidence floor");
      if (confidence_floor)
        require(*confidence_floor > 0 && *confidence_floor < 1, ErrorKind::parameter,
                "confidence floor must lie in (0, 1)");
    }
  }
};

struct ValidationReport {
  double rho = 0.0;
  double scaled_rho = 0.0;
  double interval_low = 0.0;
  double interval_high = 0.0;
  double confidence_floor = 0.0;
};

namespace detail {

inline double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

// Ceiling that ignores roundoff just above an integer, so 4.000000000001
// counts as 4.
inline Index ceil_count(double x) {
  return Index(std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))));
}

inline void require_eta(double eta) {
  require(eta > 0 && eta < 0.5, ErrorKind::parameter, "eta must lie in (0, 1/2)");
}

inline void require_unit_open(double x, const char* name) {
  require(x > 0 && x < 1, ErrorKind::parameter, std::string(name) + " must lie in (0, 1)");
}

}  // namespace detail

/// Sum of complex moduli.
template <class Derived>
double l1_norm(const Eigen::MatrixBase<Derived>& v) {
  return v.cwiseAbs().sum();
}

/// rho = ||V - Psi F^{-1} X_hat||_1 / v.
inline double validation_parameter(const ComplexVector& testing, const RealMatrix& psi,
                                   const Spectrum& estimate) {
  detail::require(testing.size() > 0, ErrorKind::parameter, "testing set is empty");
  detail::require(psi.rows() == testing.size(), ErrorKind::dimension,
                  "testing matrix rows must match the testing vector");
  require_length(estimate, psi.cols());
  const ComplexVector x_hat = fft_inverse(estimate.bins);
  Eigen::Matrix<double, Eigen::Dynamic, 2> parts(x_hat.size(), 2);
  parts.col(0) = x_hat.real();
  parts.col(1) = x_hat.imag();
  const Eigen::Matrix<double, Eigen::Dynamic, 2> pred = psi * parts;
  double acc = 0.0;
  for (Index i = 0; i < testing.size(); ++i)
    acc += std::abs(testing[i] - Complex(pred(i, 0), pred(i, 1)));
  return acc / double(testing.size());
}

inline double scaled_rho(double rho, Index p, Index N) {
  return std::sqrt(kPi * double(p) * double(N) / 2) * rho;
}

/// 1 - 4 exp(-v eta^2 / C), clipped to [0, 1].
inline double noiseless_confidence_floor(Index v, double eta, double C = 1.0) {
  return detail::clip01(1 - 4 * std::exp(-double(v) * eta * eta / C));
}

inline ValidationReport confidence_interval(double rho, Index p, Index N, double eta, Index v,
                                            double C = 1.0) {
  detail::require_eta(eta);
  detail::require(rho >= 0, ErrorKind::parameter, "rho must be nonnegative");
  ValidationReport r;
  r.rho = rho;
  r.scaled_rho = scaled_rho(rho, p, N);
  r.interval_low = r.scaled_rho / (1 + eta);
  r.interval_high = r.scaled_rho / (1 - eta);
  r.confidence_floor = noiseless_confidence_floor(v, eta, C);
  return r;
}

/// ceil(C eta^-2 ln(4 / xi)).
/// Accepts the whole domain where the count is positive: eta in (0, 1/2]
/// and xi in (0, 4).
inline Index testing_size_noiseless(double eta, double xi, double C = 1.0) {
  detail::require(eta > 0 && eta <= 0.5, ErrorKind::parameter, "eta must lie in (0, 1/2]");
  detail::require(xi > 0 && xi < 4, ErrorKind::parameter, "xi must lie in (0, 4)");
  detail::require(C > 0, ErrorKind::parameter, "C must be positive");
  return detail::ceil_count(C / (eta * eta) * std::log(4 / xi));
}

struct HaltDecision {
  bool halt = false;
  bool unsatisfiable = false;  // the fixed-confidence bracket is <= 0 at this v
  double threshold = 0.0;      // bound on rho; meaningless when unsatisfiable

  explicit operator bool() const { return halt; }
};

/// Threshold on rho for the noiseless criterion:
///   varpi (1 - eta) sqrt(2 / (pi p N)), or with xi set
///   varpi (1 - sqrt(C/v ln(4/xi))) sqrt(2 / (pi p N)).
/// varpi here is already in absolute units.
inline HaltDecision noiseless_threshold(double varpi, Index p, Index N, Index v,
                                        const HaltingConfig& cfg) {
  const double base = varpi * std::sqrt(2 / (kPi * double(p) * double(N)));
  HaltDecision d;
  if (cfg.failure_prob) {
    detail::require(v > 0, ErrorKind::parameter, "testing size must be positive");
    const double bracket = 1 - std::sqrt(cfg.jl_constant / double(v) * std::log(4 / *cfg.failure_prob));
    if (bracket <= 0) {
      d.unsatisfiable = true;
      return d;
    }
    d.threshold = bracket * base;
  } else {
    d.threshold = (1 - cfg.confidence_factor) * base;
  }
  return d;
}

/// Noiseless criterion rho <= threshold. v is only consulted by the
/// fixed-confidence variant.
inline HaltDecision halt_noiseless(double rho, Index p, Index N, const HaltingConfig& cfg,
                                   Index v = 0) {
  detail::require(cfg.mode == HaltingMode::noiseless, ErrorKind::parameter,
                  "noiseless criterion needs a noiseless config");
  HaltDecision d = noiseless_threshold(cfg.error_threshold, p, N, v, cfg);
  d.halt = !d.unsatisfiable && rho <= d.threshold;
  return d;
}

/// Like halt_noiseless, but reports an unsatisfiable bracket as an error.
inline bool halt_noiseless_strict(double rho, Index p, Index N, const HaltingConfig& cfg, Index v = 0) {
  const HaltDecision d = halt_noiseless(rho, p, N, cfg, v);
  detail::require(!d.unsatisfiable, ErrorKind::criterion_unsatisfiable,
                  "criterion bracket is non-positive at v = " + std::to_string(v));
  return d.halt;
}

/// |rho - sqrt(pi/2) delta| <= theta.
inline bool halt_noisy(double rho, double delta, double theta) {
  return std::abs(rho - std::sqrt(kPi / 2) * delta) <= theta;
}

inline bool halt_noisy(double rho, const HaltingConfig& cfg) {
  detail::require(cfg.mode == HaltingMode::noisy, ErrorKind::parameter,
                  "noisy criterion needs a noisy config");
  return halt_noisy(rho, cfg.noise_std, cfg.accuracy);
}

/// ceil(ln(2/varrho) ((4 - pi) delta^2 + 2 theta delta) / theta^2).
/// varrho may range over (0, 2), where the count is positive.
inline Index testing_size_noisy(double theta, double delta, double varrho) {
  detail::require(theta > 0 && delta > 0, ErrorKind::parameter, "theta and delta must be positive");
  detail::require(varrho > 0 && varrho < 2, ErrorKind::parameter, "varrho must lie in (0, 2)");
  return detail::ceil_count(std::log(2 / varrho) * ((4 - kPi) * delta * delta + 2 * theta * delta) /
                            (theta * theta));
}

/// 1 - 2 exp(-v theta^2 / ((4 - pi) delta^2 + 2 theta delta)), clipped to [0, 1].
inline double confidence_floor_noisy(Index v, double theta, double delta) {
  detail::require(theta > 0 && delta > 0, ErrorKind::parameter, "theta and delta must be positive");
  return detail::clip01(1 - 2 * std::exp(-double(v) * theta * theta /
                                         ((4 - kPi) * delta * delta + 2 * theta * delta)));
}

/// Positive root of v theta^2 - (1/2) ln(2/varrho) delta theta - (4 - pi) ln(2/varrho) delta^2 = 0.
inline double accuracy_from_confidence(double varrho, double delta, Index v) {
  detail::require_unit_open(varrho, "varrho");
  detail::require(delta > 0, ErrorKind::parameter, "delta must be positive");
  detail::require(v >= 1, ErrorKind::parameter, "testing size must be at least 1");
  const double g = std::log(2 / varrho);
  const double vd = double(v);
  return (g * delta + delta * std::sqrt(g * g + 16 * (4 - kPi) * g * vd)) / (4 * vd);
}

/// Left side of the defining quadratic; zero at the accuracy parameter.
inline double accuracy_quadratic(double theta, double varrho, double delta, Index v) {
  const double g = std::log(2 / varrho);
  return double(v) * theta * theta - 0.5 * g * delta * theta - (4 - kPi) * g * delta * delta;
}

/// The accuracy in force for a noisy config at testing size v.
inline double effective_accuracy(const HaltingConfig& cfg, Index v) {
  if (cfg.confidence_floor) return accuracy_from_confidence(*cfg.confidence_floor, cfg.noise_std, v);
  return cfg.accuracy;
}

struct JlCalibration {
  double coverage = 0.0;     // fraction of draws with ||e|| inside the interval
  double bound = 0.0;        // 1 - 4 exp(-v eta^2), i.e. the floor at C = 1
  double implied_c = 0.0;    // largest C whose floor the coverage still meets
  int trials = 0;
};

/// Monte Carlo estimate of how often sqrt(pi/2) ||Psi e||_1 / v brackets
/// ||e||_2 within [(1 - eta), (1 + eta)] for random unit e and a random
/// v x n testing matrix of the given distribution.
inline JlCalibration calibrate_jl_constant(MatrixDistribution dist, Index v, Index n, double eta,
                                           int trials, std::uint64_t seed) {
  detail::require_eta(eta);
  detail::require(trials >= 1 && v >= 1 && n >= v, ErrorKind::parameter, "bad calibration sizes");
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t ts = derive_seed(seed, std::uint64_t(t));
    const RealMatrix psi = draw_matrix({v, n, dist, derive_seed(ts, "matrix")});
    Rng rng(derive_seed(ts, "error"));
    std::normal_distribution<double> normal;
    RealVector e(n);
    for (Index i = 0; i < n; ++i) e[i] = normal(rng);
    e.normalize();
    const double s = std::sqrt(kPi / 2) * (psi * e).cwiseAbs().sum() / double(v);
    if (s >= 1 - eta && s <= 1 + eta) ++hits;
  }
  JlCalibration out;
  out.trials = trials;
  out.coverage = double(hits) / trials;
  out.bound = noiseless_confidence_floor(v, eta, 1.0);
  const double miss = 1 - out.coverage;
  out.implied_c = miss > 0 && miss < 4 ? -double(v) * eta * eta / std::log(miss / 4)
                                       : std::numeric_limits<double>::infinity();
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const HaltingConfig& c) {
  j = nlohmann::json{{"mode", c.mode == HaltingMode::noiseless ? "noiseless" : "noisy"},
                     {"error_threshold", c.error_threshold},
                     {"threshold_units", c.threshold_units == ThresholdUnits::absolute ? "absolute" : "relative"},
                     {"eta", c.confidence_factor},
                     {"C", c.jl_constant},
                     {"delta", c.noise_std},
                     {"theta", c.accuracy},
                     {"k_max", c.max_sparsity}};
  if (c.failure_prob) j["xi"] = *c.failure_prob;
  if (c.confidence_floor) j["varrho"] = *c.confidence_floor;
}

inline void from_json(const nlohmann::json& j, HaltingConfig& c) {
  const std::string mode = j.value("mode", std::string("noiseless"));
  if (mode == "noiseless") c.mode = HaltingMode::noiseless;
  else if (mode == "noisy") c.mode = HaltingMode::noisy;
  else throw Error(ErrorKind::configuration, "unknown halting mode '" + mode + "'");
  c.error_threshold = j.value("error_threshold", c.error_threshold);
  const std::string units = j.value("threshold_units", std::string("absolute"));
  if (units == "absolute") c.threshold_units = ThresholdUnits::absolute;
  else if (units == "relative") c.threshold_units = ThresholdUnits::relative;
  else throw Error(ErrorKind::configuration, "unknown threshold units '" + units + "'");
  c.confidence_factor = j.value("eta", c.confidence_factor);
  c.jl_constant = j.value("C", c.jl_constant);
  c.noise_std = j.value("delta", c.noise_std);
  c.accuracy = j.value("theta", c.accuracy);
  c.max_sparsity = j.value("k_max", c.max_sparsity);
  if (j.contains("xi")) c.failure_prob = j.at("xi").get<double>();
  if (j.contains("varrho")) c.confidence_floor = j.at("varrho").get<double>();
}

}  // namespace acss
