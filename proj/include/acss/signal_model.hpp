#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "acss/error.hpp"
#include "acss/fft.hpp"
#include "acss/rng.hpp"
#include "acss/types.hpp"

namespace acss {

/// One occupied subband: power E (linear), bandwidth B and centre frequency.
struct SubbandSpec {
  double power = 0.0;
  double bandwidth_hz = 0.0;
  double center_hz = 0.0;

  double low_hz() const { return center_hz - bandwidth_hz / 2; }
  double high_hz() const { return center_hz + bandwidth_hz / 2; }
};

/// Multiband primary-user signal: a sum of modulated sinc pulses sharing one
/// time offset, observed over [0, W] Hz and sampled at the Nyquist rate.
struct WidebandSignalSpec {
  double total_bandwidth_hz = 0.0;
  std::vector<SubbandSpec> subbands;
  double time_offset_s = 0.0;
  double nyquist_hz = 0.0;

  double occupancy() const {
    double used = 0.0;
    for (const auto& s : subbands) used += s.bandwidth_hz;
    return total_bandwidth_hz > 0 ? used / total_bandwidth_hz : 0.0;
  }

  void validate() const {
    using detail::require;
    require(total_bandwidth_hz > 0, ErrorKind::invalid_spec, "total bandwidth must be positive");
    require(nyquist_hz > 0 && nyquist_hz >= 2 * total_bandwidth_hz * (1 - 1e-12),
            ErrorKind::invalid_spec, "nyquist rate must be at least twice the bandwidth");
    const double slack = 1e-9 * total_bandwidth_hz;
    for (const auto& s : subbands) {
      require(s.power >= 0, ErrorKind::invalid_spec, "subband power must be nonnegative");
      require(s.bandwidth_hz >= 0, ErrorKind::invalid_spec, "subband bandwidth must be nonnegative");
      require(s.low_hz() >= -slack && s.high_hz() <= total_bandwidth_hz + slack,
              ErrorKind::invalid_spec, "subband must lie inside [0, W]");
    }
    std::vector<SubbandSpec> sorted = subbands;
    std::sort(sorted.begin(), sorted.end(),
              [](const SubbandSpec& a, const SubbandSpec& b) { return a.low_hz() < b.low_hz(); });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      require(sorted[i].low_hz() > sorted[i - 1].high_hz(), ErrorKind::invalid_spec,
              "subbands overlap");
    }
  }
};

struct TimeSeries {
  RealVector samples;
  double rate_hz = 0.0;
  double origin_s = 0.0;

  Index size() const { return samples.size(); }
  double duration_s() const { return rate_hz > 0 ? double(samples.size()) / rate_hz : 0.0; }
};

struct Spectrum {
  ComplexVector bins;
  double bin_resolution_hz = 0.0;

  Index size() const { return bins.size(); }
};

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

/// Sample-level model used by synthesize_signal.
///  - direct:   Nyquist samples of the pulse train itself (finite observation).
///  - periodic: samples of the pulse train periodized with `period_s`. Its DFT
///              over one period is exactly band-limited to the subbands, so
///              the spectrum is exactly sparse on the 1/period grid.
enum class SynthesisModel { direct, periodic };

struct SynthesisOptions {
  SynthesisModel model = SynthesisModel::direct;
  double period_s = 0.0;  // periodic model only
};

namespace detail {

inline Index integer_sample_count(double seconds, double rate_hz, const char* what) {
  const double count = seconds * rate_hz;
  const double rounded = std::round(count);
  require(rounded >= 1 && std::abs(count - rounded) <= 1e-6 * std::max(1.0, rounded),
          ErrorKind::configuration, std::string(what) + " times sampling rate must be an integer");
  return static_cast<Index>(rounded);
}

// Continuous Fourier transform of the pulse train at frequency nu (Hz).
inline Complex pulse_train_transform(const WidebandSignalSpec& spec, double nu) {
  Complex acc{0.0, 0.0};
  for (const auto& s : spec.subbands) {
    if (s.bandwidth_hz <= 0) continue;
    double weight = 0.0;
    if (std::abs(nu - s.center_hz) <= s.bandwidth_hz / 2) weight += 0.5;
    if (std::abs(nu + s.center_hz) <= s.bandwidth_hz / 2) weight += 0.5;
    if (weight == 0.0) continue;
    acc += std::sqrt(s.power) * weight * std::polar(1.0, -2 * kPi * nu * spec.time_offset_s);
  }
  return acc;
}

}  // namespace detail

/// DFT (over one period of P samples) of the periodized pulse train.
/// Bin m holds f * sum_j Xc((m + jP) / T), Xc the continuous transform.
inline Spectrum periodic_spectrum(const WidebandSignalSpec& spec, double period_s) {
  spec.validate();
  const Index P = detail::integer_sample_count(period_s, spec.nyquist_hz, "period");
  const double f = spec.nyquist_hz;
  ComplexVector X = ComplexVector::Zero(P);
  // Components are band-limited to |nu| <= f/2, so only m in [-P/2, P/2] matter.
  const Index half = P / 2;
  for (Index m = -half; m <= half; ++m) {
    const double nu = double(m) / period_s;
    const Complex v = detail::pulse_train_transform(spec, nu);
    if (v == Complex{0.0, 0.0}) continue;
    const Index bin = ((m % P) + P) % P;
    X[bin] += f * v;
  }
  return Spectrum{std::move(X), 1.0 / period_s};
}

/// Nyquist samples of the multiband signal over [0, duration).
inline TimeSeries synthesize_signal(const WidebandSignalSpec& spec, double duration_s,
                                    const SynthesisOptions& options = {}) {
  spec.validate();
  detail::require(duration_s > 0, ErrorKind::configuration, "duration must be positive");
  const Index n = detail::integer_sample_count(duration_s, spec.nyquist_hz, "duration");
  const double f = spec.nyquist_hz;
  RealVector x = RealVector::Zero(n);

  if (options.model == SynthesisModel::direct) {
    for (const auto& s : spec.subbands) {
      const double amp = std::sqrt(s.power) * s.bandwidth_hz;
      if (amp == 0.0) continue;
      for (Index i = 0; i < n; ++i) {
        const double t = double(i) / f - spec.time_offset_s;
        x[i] += amp * sinc(s.bandwidth_hz * t) * std::cos(2 * kPi * s.center_hz * t);
      }
    }
  } else {
    detail::require(options.period_s > 0, ErrorKind::configuration,
                    "periodic synthesis needs a positive period");
    const Spectrum one_period = periodic_spectrum(spec, options.period_s);
    const RealVector cycle = fft_inverse(one_period.bins).real();
    const Index P = cycle.size();
    for (Index i = 0; i < n; ++i) x[i] = cycle[i % P];
  }
  return TimeSeries{std::move(x), f, 0.0};
}

inline Spectrum dft(const TimeSeries& x) {
  detail::require(x.size() > 0, ErrorKind::dimension, "dft of an empty series");
  return Spectrum{fft_forward(x.samples), x.rate_hz / double(x.size())};
}

/// Inverse transform back to a real series (the imaginary residue of a
/// conjugate-symmetric spectrum is dropped).
inline TimeSeries idft(const Spectrum& X) {
  detail::require(X.size() > 0, ErrorKind::dimension, "idft of an empty spectrum");
  return TimeSeries{fft_inverse(X.bins).real(), X.bin_resolution_hz * double(X.size()), 0.0};
}

inline void require_length(const Spectrum& X, Index expected) {
  detail::require(X.size() == expected, ErrorKind::dimension,
                  "spectrum length " + std::to_string(X.size()) + " does not match expected " +
                      std::to_string(expected));
}

/// Number of bins whose modulus exceeds the threshold.
inline Index effective_sparsity(const Spectrum& X, double magnitude_threshold) {
  detail::require(magnitude_threshold >= 0, ErrorKind::parameter, "threshold must be nonnegative");
  Index k = 0;
  for (Index i = 0; i < X.size(); ++i)
    if (std::abs(X.bins[i]) > magnitude_threshold) ++k;
  return k;
}

/// Count of grid bins (positive and mirrored) a spec occupies in its
/// periodized spectrum with the given period.
inline Index occupied_bins(const WidebandSignalSpec& spec, double period_s) {
  const Spectrum X = periodic_spectrum(spec, period_s);
  return effective_sparsity(X, 0.0);
}

// ---------------------------------------------------------------------------
// Random multiband draws

/// How a drawn SNR sets a subband's power E.
///  - subband_power: E = SNR * noise_std^2.
///  - slot_energy:   E such that the subband's energy over one slot of
///                   Nyquist samples equals SNR * noise_std^2.
enum class SnrCalibration { subband_power, slot_energy };

/// Parameters of a random multiband draw with a prescribed number of occupied
/// bins on the slot grid (resolution 1/slot). The sparsity target must be even
/// since every positive-frequency bin has a mirror.
struct MultibandDraw {
  double total_bandwidth_hz = 2.5e9;
  double nyquist_hz = 5e9;
  double slot_s = 0.2e-6;
  int num_subbands = 4;
  int sparsity = 32;
  double max_subband_hz = 50e6;
  double max_offset_s = 0.1e-6;
  double snr_low_db = 7.0;
  double snr_high_db = 25.0;
  /// Per-quadrature measurement noise reference for the SNR draw.
  double noise_std = 1.0;
  SnrCalibration snr_calibration = SnrCalibration::subband_power;
};

inline WidebandSignalSpec random_multiband_spec(const MultibandDraw& d, std::uint64_t seed) {
  using detail::require;
  require(d.sparsity >= 0 && d.sparsity % 2 == 0, ErrorKind::parameter,
          "sparsity target must be a nonnegative even number");
  require(d.num_subbands >= 1, ErrorKind::parameter, "need at least one subband");
  const int per_band_max = int(std::floor(d.max_subband_hz * d.slot_s + 1e-9));
  const int half = d.sparsity / 2;
  require(half <= per_band_max * d.num_subbands, ErrorKind::parameter,
          "sparsity target exceeds what the subbands can hold");

  Rng rng(seed);
  const double grid = 1.0 / d.slot_s;

  // Random composition of `half` bins into num_subbands parts, each capped.
  std::vector<int> bins(d.num_subbands, 0);
  {
    std::uniform_int_distribution<int> pick(0, d.num_subbands - 1);
    for (int placed = 0; placed < half;) {
      const int b = pick(rng);
      if (bins[b] < per_band_max) {
        ++bins[b];
        ++placed;
      }
    }
  }

  WidebandSignalSpec spec;
  spec.total_bandwidth_hz = d.total_bandwidth_hz;
  spec.nyquist_hz = d.nyquist_hz;
  std::uniform_real_distribution<double> offset(0.0, d.max_offset_s);
  spec.time_offset_s = offset(rng);

  // Place each nonempty band at a random off-grid position, rejecting overlaps
  // (including shared or adjacent grid bins).
  for (int b = 0; b < d.num_subbands; ++b) {
    if (bins[b] == 0) continue;
    const double width = bins[b] * grid;
    for (int attempt = 0;; ++attempt) {
      require(attempt < 10000, ErrorKind::parameter, "could not place non-overlapping subbands");
      // Centres keep the band clear of DC and the Nyquist bin.
      std::uniform_real_distribution<double> centre(width / 2 + grid, d.total_bandwidth_hz - width / 2 - grid);
      double fc = centre(rng);
      // Keep band edges strictly between grid points so the band covers
      // exactly bins[b] grid frequencies.
      const double lo = fc - width / 2;
      const double frac = lo / grid - std::floor(lo / grid);
      if (frac < 1e-3 || frac > 1 - 1e-3) continue;
      bool clash = false;
      for (const auto& other : spec.subbands) {
        if (lo - grid < other.high_hz() && fc + width / 2 + grid > other.low_hz()) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      spec.subbands.push_back(SubbandSpec{1.0, width, fc});
      break;
    }
  }

  std::uniform_real_distribution<double> snr_db(d.snr_low_db, d.snr_high_db);
  for (auto& s : spec.subbands) {
    const double target = std::pow(10.0, snr_db(rng) / 10.0) * d.noise_std * d.noise_std;
    if (d.snr_calibration == SnrCalibration::subband_power) {
      s.power = target;
      continue;
    }
    WidebandSignalSpec single = spec;
    single.subbands = {SubbandSpec{1.0, s.bandwidth_hz, s.center_hz}};
    const Spectrum X = periodic_spectrum(single, d.slot_s);
    const double unit_energy = X.bins.squaredNorm() / double(X.size());
    s.power = unit_energy > 0 ? target / unit_energy : 0.0;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const SubbandSpec& s) {
  j = nlohmann::json{{"E", s.power}, {"B_hz", s.bandwidth_hz}, {"fc_hz", s.center_hz}};
}

inline void from_json(const nlohmann::json& j, SubbandSpec& s) {
  j.at("E").get_to(s.power);
  j.at("B_hz").get_to(s.bandwidth_hz);
  j.at("fc_hz").get_to(s.center_hz);
}

inline void to_json(nlohmann::json& j, const WidebandSignalSpec& s) {
  j = nlohmann::json{{"W_hz", s.total_bandwidth_hz},
                     {"subbands", s.subbands},
                     {"alpha_s", s.time_offset_s},
                     {"nyquist_hz", s.nyquist_hz}};
}

inline void from_json(const nlohmann::json& j, WidebandSignalSpec& s) {
  j.at("W_hz").get_to(s.total_bandwidth_hz);
  s.subbands = j.value("subbands", std::vector<SubbandSpec>{});
  s.time_offset_s = j.value("alpha_s", 0.0);
  s.nyquist_hz = j.value("nyquist_hz", 2 * s.total_bandwidth_hz);
}

}  // namespace acss
