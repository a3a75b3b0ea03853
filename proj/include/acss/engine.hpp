#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acss/error.hpp"
#include "acss/recovery.hpp"
#include "acss/rng.hpp"
#include "acss/sensing.hpp"
#include "acss/signal_model.hpp"
#include "acss/types.hpp"
#include "acss/validation.hpp"

namespace acss {

enum class MatrixMode { dense, causal_block };

/// Periodic sensing frame: p slots of length tau are spent sensing, the rest
/// of the frame (at least T_min) is left for transmission.
struct FrameConfig {
  double frame_length_s = 4e-6;        // L
  double min_transmission_s = 2.4e-6;  // T_min
  double time_step_s = 0.2e-6;         // tau
  double nyquist_hz = 5e9;             // f
  double sub_nyquist_hz = 1e9;         // f_s
  Index testing_per_step = 40;
  MatrixMode matrix_mode = MatrixMode::dense;
  MatrixDistribution distribution = MatrixDistribution::gaussian_standard;
  SplitAssignment split = SplitAssignment::tail_rows;
  /// Each frame observes one realization; `periodic` repeats it every slot.
  SynthesisModel synthesis = SynthesisModel::periodic;
  double noise_std = 0.0;  // delta, per quadrature

  Index nyquist_per_step() const {
    return detail::integer_sample_count(time_step_s, nyquist_hz, "time step");
  }
  Index measurements_per_step() const {
    return detail::integer_sample_count(time_step_s, sub_nyquist_hz, "time step");
  }

  void validate() const {
    using detail::require;
    require(time_step_s > 0 && frame_length_s > 0 && min_transmission_s >= 0, ErrorKind::configuration,
            "frame times must be positive");
    require(sub_nyquist_hz > 0 && sub_nyquist_hz < nyquist_hz, ErrorKind::configuration,
            "sub-Nyquist rate must lie below the Nyquist rate");
    nyquist_per_step();
    measurements_per_step();
    require(frame_length_s - min_transmission_s >= time_step_s * (1 - 1e-9), ErrorKind::configuration,
            "frame leaves no room for a sensing step");
    require(testing_per_step >= 1 && testing_per_step < measurements_per_step(), ErrorKind::configuration,
            "testing measurements per step must lie in [1, f_s tau)");
    require(noise_std >= 0, ErrorKind::configuration, "noise level must be nonnegative");
  }
};

/// floor((L - T_min) / tau), tolerant of roundoff in the ratio.
inline int max_steps(const FrameConfig& frame) {
  const double ratio = (frame.frame_length_s - frame.min_transmission_s) / frame.time_step_s;
  return int(std::floor(ratio + 1e-9));
}

struct Band {
  double low_hz = 0.0;
  double high_hz = 0.0;
};

struct DetectorConfig {
  std::vector<Band> bands;
  double lambda = 1.0;

  /// `count` equal bands tiling [0, W].
  static std::vector<Band> uniform_bands(double total_bandwidth_hz, int count) {
    std::vector<Band> out;
    for (int i = 0; i < count; ++i)
      out.push_back({total_bandwidth_hz * i / count, total_bandwidth_hz * (i + 1) / count});
    return out;
  }
};

enum class Decision { H0, H1 };

struct BandDecision {
  Band band;
  double energy = 0.0;
  Decision decision = Decision::H0;
  bool empty_band = false;  // no bin centre fell inside the band
};

/// In-band energy of a spectrum, counting each bin whose centre frequency (or
/// its mirror) lies in the band. Energy is normalized by len^2, i.e. it is
/// the in-band power per Nyquist sample, so one lambda serves every step count.
/// H1 iff energy > lambda.
inline BandDecision energy_detect(const Spectrum& estimate, const Band& band, double lambda) {
  detail::require(lambda > 0, ErrorKind::parameter, "lambda must be positive");
  detail::require(band.low_hz <= band.high_hz, ErrorKind::parameter, "band edges reversed");
  BandDecision out;
  out.band = band;
  const Index n = estimate.size();
  double acc = 0.0;
  Index hits = 0;
  for (Index m = 0; m < n; ++m) {
    const Index folded = m <= n / 2 ? m : n - m;
    const double f = double(folded) * estimate.bin_resolution_hz;
    if (f >= band.low_hz && f <= band.high_hz) {
      acc += std::norm(estimate.bins[m]);
      ++hits;
    }
  }
  out.empty_band = hits == 0;
  out.energy = n > 0 ? acc / (double(n) * double(n)) : 0.0;
  out.decision = out.energy > lambda ? Decision::H1 : Decision::H0;
  return out;
}

struct StepTrace {
  int p = 0;
  Index measurements = 0;  // M_p
  Index training = 0;      // r_p
  Index testing = 0;       // v_p
  int iterations = 0;
  HaltReason recovery_halt = HaltReason::k_max_exhausted;
  double rho = 0.0;
  double scaled_rho = 0.0;
  double rho_threshold = 0.0;  // noiseless bound on rho, or theta in noisy mode
  bool criterion_met = false;
  bool criterion_unsatisfiable = false;
  // Ground truth diagnostics; never consulted by the loop.
  double true_error = 0.0;    // ||X_p - X_hat_p||_2
  double signal_norm = 0.0;   // ||X_p||_2
  double relative_mse = 0.0;  // true_error^2 / signal_norm^2 (0 for a zero signal with zero error)
};

struct SensingOutcome {
  bool halted = false;
  int steps_used = 0;
  int p_max = 0;
  int saved_slots = 0;
  bool recommend_increase_fs = false;
  Spectrum estimate;
  SpectralRecovery recovery;
  std::vector<BandDecision> decisions;
  std::vector<StepTrace> steps;
  double relative_mse = 0.0;  // of the returned estimate
};

struct RunOptions {
  /// Keep sensing (and tracing) up to p_max after the criterion fires. The
  /// outcome still reports the first halting step.
  bool trace_all_steps = false;
};

namespace detail {

inline double relative_mse(double err, double norm) {
  if (norm == 0.0) return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (err * err) / (norm * norm);
}

}  // namespace detail

/// The ACSS loop: for p = 1, 2, ... acquire M_p = f_s p tau compressive
/// samples of the first p slots, split them into training and v_p testing
/// rows, run SASR and stop once its halting criterion holds or p_max slots are
/// spent. Energy detection runs on the final estimate.
inline SensingOutcome run_frame(const WidebandSignalSpec& spec, const FrameConfig& frame,
                                const HaltingConfig& halting, const DetectorConfig& detector,
                                std::uint64_t master_seed, const RunOptions& options = {}) {
  spec.validate();
  frame.validate();
  halting.validate();
  detail::require(std::abs(spec.nyquist_hz - frame.nyquist_hz) <= 1e-9 * frame.nyquist_hz,
                  ErrorKind::configuration, "signal and frame disagree on the Nyquist rate");
  detail::require((halting.mode == HaltingMode::noisy) == (frame.noise_std > 0), ErrorKind::configuration,
                  "halting mode must match the frame noise setting");
  for (const auto& b : detector.bands)
    detail::require(b.low_hz >= 0 && b.high_hz <= spec.total_bandwidth_hz * (1 + 1e-12) && b.low_hz <= b.high_hz,
                    ErrorKind::configuration, "detector band must lie inside [0, W]");
  detail::require(detector.lambda > 0, ErrorKind::configuration, "lambda must be positive");

  const int p_max = max_steps(frame);
  const Index N = frame.nyquist_per_step();
  const Index m = frame.measurements_per_step();
  const Index v_step = frame.testing_per_step;
  const double tau = frame.time_step_s;

  SynthesisOptions synth;
  synth.model = frame.synthesis;
  synth.period_s = tau;
  const TimeSeries full = synthesize_signal(spec, tau * p_max, synth);

  const std::uint64_t matrix_seed = derive_seed(master_seed, "matrix");
  const std::uint64_t noise_seed = derive_seed(master_seed, "noise");
  const std::uint64_t split_seed = derive_seed(master_seed, "split");

  // causal_block: one noise draw per physical sample, reused as slots accrue.
  ComplexVector causal_noise;
  if (frame.matrix_mode == MatrixMode::causal_block)
    causal_noise = draw_complex_noise(m * p_max, frame.noise_std, noise_seed);

  SensingOutcome out;
  out.p_max = p_max;

  for (int p = 1; p <= p_max; ++p) {
    const Index pN = N * p;
    const Index M = m * p;
    const Index v = v_step * p;
    TimeSeries xp{full.samples.head(pN), full.rate_hz, 0.0};

    MeasurementSet ms;
    if (frame.matrix_mode == MatrixMode::dense) {
      const RealMatrix mat = draw_matrix({M, pN, frame.distribution, derive_seed(matrix_seed, std::uint64_t(p))});
      const RowSplit split = split_rows(M, {v, frame.split, derive_seed(split_seed, std::uint64_t(p))});
      ms = acquire(xp, select_rows(mat, split.training), select_rows(mat, split.testing), frame.noise_std,
                   derive_seed(noise_seed, std::uint64_t(p)));
    } else {
      const RealMatrix mat = draw_causal_block_matrix(p, m, N, frame.distribution, matrix_seed);
      // The last v_step rows of every slot are testing rows.
      std::vector<Index> train_rows, test_rows;
      for (Index r = 0; r < M; ++r) (r % m >= m - v_step ? test_rows : train_rows).push_back(r);
      const ComplexVector y = (mat * xp.samples).cast<Complex>() + causal_noise.head(M);
      ms.phi = select_rows(mat, train_rows);
      ms.psi = select_rows(mat, test_rows);
      ms.training.resize(Index(train_rows.size()));
      ms.testing.resize(Index(test_rows.size()));
      for (std::size_t i = 0; i < train_rows.size(); ++i) ms.training[Index(i)] = y[train_rows[i]];
      for (std::size_t i = 0; i < test_rows.size(); ++i) ms.testing[Index(i)] = y[test_rows[i]];
      ms.noise_std = frame.noise_std;
    }
    ms.step_index = p;
    ms.step_nyquist_count = N;

    const ResolvedHalting resolved = resolve_halting(ms, halting);
    SpectralRecovery rec = sasr(ms, halting);

    StepTrace st;
    st.p = p;
    st.measurements = M;
    st.training = ms.training_size();
    st.testing = ms.testing_size();
    st.iterations = rec.iterations;
    st.recovery_halt = rec.halted_by;
    st.rho = rec.rho_trace.empty() ? rec.final_rho : rec.rho_trace.back();
    st.scaled_rho = scaled_rho(st.rho, p, N);
    st.rho_threshold = halting.mode == HaltingMode::noiseless ? resolved.rho_threshold : resolved.accuracy;
    st.criterion_unsatisfiable = resolved.unsatisfiable;
    st.criterion_met = rec.halted_by == HaltReason::criterion;
    const ComplexVector truth = fft_forward(xp.samples);
    st.signal_norm = truth.norm();
    st.true_error = (truth - rec.estimate).norm();
    st.relative_mse = detail::relative_mse(st.true_error, st.signal_norm);
    out.steps.push_back(st);

    if (!out.halted) {
      out.recovery = rec;
      out.estimate = Spectrum{rec.estimate, 1.0 / (tau * p)};
      out.steps_used = p;
      out.relative_mse = st.relative_mse;
      out.halted = st.criterion_met;
    }
    if (out.halted && !options.trace_all_steps) break;
  }

  if (!out.halted) {
    out.steps_used = p_max;
    out.recommend_increase_fs = true;
  }
  out.saved_slots = p_max - out.steps_used;
  for (const auto& b : detector.bands) out.decisions.push_back(energy_detect(out.estimate, b, detector.lambda));
  return out;
}

struct LambdaCalibration {
  double lambda = 0.0;       // (1 - false_alarm) quantile of noise-only band energies
  double mean_energy = 0.0;  // mean noise-only band energy
  int samples = 0;
};

/// Runs noise-only frames (the scenario's subbands removed) and returns the band
/// energy quantile that keeps the false-alarm rate at `false_alarm`.
inline LambdaCalibration calibrate_lambda(const WidebandSignalSpec& spec, const FrameConfig& frame,
                                          const HaltingConfig& halting, const DetectorConfig& detector,
                                          int trials, double false_alarm, std::uint64_t seed) {
  detail::require(trials >= 1, ErrorKind::parameter, "need at least one trial");
  detail::require(false_alarm > 0 && false_alarm < 1, ErrorKind::parameter, "false-alarm rate must lie in (0, 1)");
  detail::require(!detector.bands.empty(), ErrorKind::parameter, "detector has no bands");
  WidebandSignalSpec empty = spec;
  empty.subbands.clear();
  DetectorConfig probe = detector;
  probe.lambda = 1.0;
  std::vector<double> energies;
  for (int t = 0; t < trials; ++t) {
    const SensingOutcome o = run_frame(empty, frame, halting, probe, derive_seed(seed, std::uint64_t(t)));
    for (const auto& d : o.decisions) energies.push_back(d.energy);
  }
  std::sort(energies.begin(), energies.end());
  LambdaCalibration c;
  c.samples = int(energies.size());
  double sum = 0.0;
  for (double e : energies) sum += e;
  c.mean_energy = sum / double(energies.size());
  const auto idx = std::size_t(std::ceil((1 - false_alarm) * double(energies.size())));
  c.lambda = energies[std::min(energies.size() - 1, idx == 0 ? 0 : idx - 1)];
  c.lambda = std::max(c.lambda, std::numeric_limits<double>::min());
  return c;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

template <class E>
E enum_from(const nlohmann::json& j, const char* key, E fallback,
            std::initializer_list<std::pair<const char*, E>> names) {
  if (!j.contains(key)) return fallback;
  const std::string s = j.at(key).get<std::string>();
  for (const auto& [n, e] : names)
    if (s == n) return e;
  throw Error(ErrorKind::configuration, std::string("unknown value '") + s + "' for " + key);
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const FrameConfig& f) {
  j = nlohmann::json{{"L_s", f.frame_length_s},
                     {"T_min_s", f.min_transmission_s},
                     {"tau_s", f.time_step_s},
                     {"f_hz", f.nyquist_hz},
                     {"fs_hz", f.sub_nyquist_hz},
                     {"v_per_step", f.testing_per_step},
                     {"matrix_mode", f.matrix_mode == MatrixMode::dense ? "dense" : "causal_block"},
                     {"distribution", f.distribution == MatrixDistribution::gaussian_standard ? "gaussian" : "bernoulli"},
                     {"split", f.split == SplitAssignment::tail_rows ? "tail_rows" : "random_rows"},
                     {"synthesis", f.synthesis == SynthesisModel::periodic ? "periodic" : "direct"},
                     {"noise_std", f.noise_std}};
}

inline void from_json(const nlohmann::json& j, FrameConfig& f) {
  f.frame_length_s = j.value("L_s", f.frame_length_s);
  f.min_transmission_s = j.value("T_min_s", f.min_transmission_s);
  f.time_step_s = j.value("tau_s", f.time_step_s);
  f.nyquist_hz = j.value("f_hz", f.nyquist_hz);
  f.sub_nyquist_hz = j.value("fs_hz", f.sub_nyquist_hz);
  f.testing_per_step = j.value("v_per_step", f.testing_per_step);
  f.noise_std = j.value("noise_std", f.noise_std);
  f.matrix_mode = detail::enum_from(j, "matrix_mode", f.matrix_mode,
                                    {{"dense", MatrixMode::dense}, {"causal_block", MatrixMode::causal_block}});
  f.distribution = detail::enum_from(j, "distribution", f.distribution,
                                     {{"gaussian", MatrixDistribution::gaussian_standard},
                                      {"bernoulli", MatrixDistribution::bernoulli_pm1}});
  f.split = detail::enum_from(j, "split", f.split,
                              {{"tail_rows", SplitAssignment::tail_rows}, {"random_rows", SplitAssignment::random_rows}});
  f.synthesis = detail::enum_from(j, "synthesis", f.synthesis,
                                  {{"periodic", SynthesisModel::periodic}, {"direct", SynthesisModel::direct}});
}

inline void to_json(nlohmann::json& j, const Band& b) { j = nlohmann::json::array({b.low_hz, b.high_hz}); }

inline void from_json(const nlohmann::json& j, Band& b) {
  detail::require(j.is_array() && j.size() == 2, ErrorKind::configuration, "a band is [low_hz, high_hz]");
  b.low_hz = j[0].get<double>();
  b.high_hz = j[1].get<double>();
}

inline void to_json(nlohmann::json& j, const DetectorConfig& d) {
  j = nlohmann::json{{"bands", d.bands}, {"lambda", d.lambda}};
}

inline void from_json(const nlohmann::json& j, DetectorConfig& d) {
  d.bands = j.value("bands", std::vector<Band>{});
  d.lambda = j.value("lambda", d.lambda);
}

inline nlohmann::json to_json(const StepTrace& s) {
  return {{"p", s.p},
          {"M", s.measurements},
          {"r", s.training},
          {"v", s.testing},
          {"iterations", s.iterations},
          {"recovery_halt", to_string(s.recovery_halt)},
          {"rho", s.rho},
          {"scaled_rho", s.scaled_rho},
          {"rho_threshold", s.rho_threshold},
          {"criterion_met", s.criterion_met},
          {"criterion_unsatisfiable", s.criterion_unsatisfiable},
          {"true_error", s.true_error},
          {"signal_norm", s.signal_norm},
          {"relative_mse", s.relative_mse}};
}

inline nlohmann::json to_json(const SensingOutcome& o) {
  nlohmann::json j;
  j["halted"] = o.halted;
  j["steps_used"] = o.steps_used;
  j["p_max"] = o.p_max;
  j["saved_slots"] = o.saved_slots;
  j["recommend_increase_fs"] = o.recommend_increase_fs;
  j["relative_mse"] = o.relative_mse;
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& d : o.decisions)
    bands.push_back({{"band_hz", d.band},
                     {"energy", d.energy},
                     {"decision", d.decision == Decision::H1 ? "H1" : "H0"},
                     {"empty_band", d.empty_band}});
  j["decisions"] = bands;
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : o.steps) steps.push_back(to_json(s));
  j["steps"] = steps;
  const auto& r = o.recovery;
  nlohmann::json coeffs = nlohmann::json::array();
  for (Index idx : r.support) coeffs.push_back({idx, r.estimate[idx].real(), r.estimate[idx].imag()});
  j["recovery"] = {{"iterations", r.iterations},
                   {"halted_by", to_string(r.halted_by)},
                   {"rank_deficient", r.rank_deficient},
                   {"repeated_atom", r.repeated_atom},
                   {"final_rho", r.final_rho},
                   {"rho_trace", r.rho_trace},
                   {"residual_trace", r.residual_trace},
                   {"support", coeffs},
                   {"bin_resolution_hz", o.estimate.bin_resolution_hz}};
  return j;
}

}  // namespace acss
