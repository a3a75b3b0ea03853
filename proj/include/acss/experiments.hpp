#pragma once

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "acss/engine.hpp"
#include "acss/error.hpp"
#include "acss/recovery.hpp"
#include "acss/rng.hpp"
#include "acss/sensing.hpp"
#include "acss/signal_model.hpp"
#include "acss/validation.hpp"

namespace acss {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Result tables

using Cell = std::variant<std::int64_t, double, std::string, bool>;

struct ResultTable {
  std::string experiment;
  std::string config_hash;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    detail::require(it != columns.end(), ErrorKind::parameter, "no column '" + name + "'");
    return std::size_t(it - columns.begin());
  }

  double number(std::size_t row, const std::string& name) const {
    const Cell& c = rows.at(row).at(column(name));
    if (const auto* d = std::get_if<double>(&c)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&c)) return double(*i);
    if (const auto* b = std::get_if<bool>(&c)) return *b ? 1.0 : 0.0;
    throw Error(ErrorKind::parameter, "column '" + name + "' is not numeric");
  }
};

namespace detail {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string csv_field(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  if (const auto* b = std::get_if<bool>(&c)) return *b ? "true" : "false";
  const std::string& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

inline Json json_value(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  if (const auto* d = std::get_if<double>(&c)) {
    if (!std::isfinite(*d)) return nullptr;
    return *d;
  }
  if (const auto* b = std::get_if<bool>(&c)) return *b;
  return std::get<std::string>(c);
}

}  // namespace detail

inline std::string to_csv(const ResultTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + detail::csv_field(row[i]);
    out += '\n';
  }
  return out;
}

inline std::string to_json_text(const ResultTable& t) {
  Json rows = Json::array();
  for (const auto& row : t.rows) {
    Json r = Json::object();
    for (std::size_t i = 0; i < row.size(); ++i) r[t.columns[i]] = detail::json_value(row[i]);
    rows.push_back(std::move(r));
  }
  Json j = {{"experiment", t.experiment}, {"config_hash", t.config_hash}, {"columns", t.columns}, {"rows", rows}};
  return j.dump(2) + "\n";
}

/// Writes through a temporary file in the same directory and renames it, so
/// readers never see a partial file.
inline void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    detail::require(bool(f), ErrorKind::configuration, "cannot open '" + tmp.string() + "' for writing");
    f << content;
    f.flush();
    detail::require(bool(f), ErrorKind::configuration, "write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, target);
}

// ---------------------------------------------------------------------------
// Trial pool

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

/// Evaluates f(0..n-1) on a pool of workers. Results land at their trial
/// index, so the output never depends on scheduling.
template <class F>
auto parallel_map(int n, int threads, F&& f) -> std::vector<decltype(f(0))> {
  using R = decltype(f(0));
  std::vector<std::optional<R>> slots(std::size_t(std::max(n, 0)));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        slots[std::size_t(i)] = f(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
      }
    }
  };
  const int workers = std::min(resolve_threads(threads), std::max(n, 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<R> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string name;
  int trials = 0;  // 0: experiment default
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0: hardware concurrency
  Json grid = Json::object();
  Json base = Json::object();
  std::string output_path;
  std::string format = "csv";
};

inline void from_json(const Json& j, ExperimentConfig& c) {
  detail::require(j.is_object(), ErrorKind::configuration, "config must be a JSON object");
  static const std::vector<std::string> known = {"name", "trials", "master_seed", "threads",
                                                 "grid", "base", "output_path", "format"};
  for (const auto& [k, v] : j.items())
    detail::require(std::find(known.begin(), known.end(), k) != known.end(), ErrorKind::configuration,
                    "unknown config key '" + k + "'");
  detail::require(j.contains("name"), ErrorKind::configuration, "config needs an experiment 'name'");
  c.name = j.at("name").get<std::string>();
  c.trials = j.value("trials", 0);
  c.master_seed = j.value("master_seed", std::uint64_t{1});
  c.threads = j.value("threads", 0);
  c.grid = j.value("grid", Json::object());
  c.base = j.value("base", Json::object());
  c.output_path = j.value("output_path", std::string());
  c.format = j.value("format", std::string("csv"));
}

namespace detail {

// Overlays `patch` onto `defaults`, refusing keys the defaults do not know.
inline void overlay(Json& target, const Json& patch, const std::string& where) {
  require(patch.is_object(), ErrorKind::configuration, where + " must be an object");
  for (const auto& [k, v] : patch.items()) {
    require(target.contains(k), ErrorKind::configuration, "unknown key '" + k + "' in " + where);
    Json& slot = target[k];
    if (slot.is_object() && !slot.empty())
      overlay(slot, v, where + "." + k);
    else
      slot = v;
  }
}

inline double num(const Json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_number(), ErrorKind::configuration,
          std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

inline int integer(const Json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_number_integer(), ErrorKind::configuration,
          std::string("'") + key + "' must be an integer");
  return j.at(key).get<int>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shared building blocks

struct FrameSetup {
  FrameConfig frame;
  HaltingConfig halting;
  MultibandDraw draw;
  DetectorConfig detector;
};

inline Json default_frame_json() {
  FrameConfig f;
  Json j = f;
  return j;
}

inline Json default_halting_json() {
  return Json{{"mode", "noiseless"},
              {"error_threshold", std::sqrt(1e-3)},
              {"threshold_units", "relative"},
              {"eta", 0.2},
              {"C", 1.0},
              {"xi", nullptr},
              {"delta", 0.0},
              {"theta", 0.0},
              {"varrho", nullptr},
              {"k_max", 80}};
}

inline Json default_signal_json() {
  return Json{{"k", 32},
              {"num_subbands", 4},
              {"max_subband_hz", 50e6},
              {"max_offset_s", 0.1e-6},
              {"snr_db", {7.0, 25.0}},
              {"snr_calibration", "subband_power"},
              {"noise_ref", 1.0}};
}

inline HaltingConfig parse_halting(const Json& j) {
  Json clean = Json::object();
  for (const auto& [k, v] : j.items())
    if (!v.is_null()) clean[k] = v;
  HaltingConfig h = clean;
  return h;
}

inline MultibandDraw parse_signal(const Json& j, const FrameConfig& frame) {
  MultibandDraw d;
  d.nyquist_hz = frame.nyquist_hz;
  d.total_bandwidth_hz = frame.nyquist_hz / 2;
  d.slot_s = frame.time_step_s;
  d.sparsity = detail::integer(j, "k");
  d.num_subbands = detail::integer(j, "num_subbands");
  d.max_subband_hz = detail::num(j, "max_subband_hz");
  d.max_offset_s = detail::num(j, "max_offset_s");
  const Json& snr = j.at("snr_db");
  detail::require(snr.is_array() && snr.size() == 2, ErrorKind::configuration, "snr_db is [low, high]");
  d.snr_low_db = snr[0].get<double>();
  d.snr_high_db = snr[1].get<double>();
  const std::string cal = j.at("snr_calibration").get<std::string>();
  if (cal == "subband_power") d.snr_calibration = SnrCalibration::subband_power;
  else if (cal == "slot_energy") d.snr_calibration = SnrCalibration::slot_energy;
  else throw Error(ErrorKind::configuration, "unknown snr_calibration '" + cal + "'");
  d.noise_std = detail::num(j, "noise_ref");
  return d;
}

/// Relative MSE of an estimate on the bins above 1% of the peak modulus:
/// mean over those bins of |X_i - X_hat_i|^2 / |X_i|^2.
inline double significant_bin_mse(const ComplexVector& truth, const ComplexVector& estimate) {
  const double peak = truth.cwiseAbs().maxCoeff();
  if (peak == 0.0) return 0.0;
  double acc = 0.0;
  Index count = 0;
  for (Index i = 0; i < truth.size(); ++i) {
    if (std::abs(truth[i]) > 0.01 * peak) {
      acc += std::norm(truth[i] - estimate[i]) / std::norm(truth[i]);
      ++count;
    }
  }
  return acc / double(count);
}

inline double relative_error_sq(double err, double norm) { return detail::relative_mse(err, norm); }

template <class T>
double mean_of(const std::vector<T>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& x : v) s += double(x);
  return s / double(v.size());
}

/// Real k-sparse vector with a uniformly random support and N(0, 1) values.
inline RealVector random_sparse_real(Index n, int k, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (int i = 0; i < k; ++i) {
    const Index j = i + Index(rng() % std::uint64_t(n - i));
    std::swap(idx[std::size_t(i)], idx[std::size_t(j)]);
  }
  std::normal_distribution<double> normal;
  RealVector x = RealVector::Zero(n);
  for (int i = 0; i < k; ++i) x[idx[std::size_t(i)]] = normal(rng);
  return x;
}

/// Conjugate-symmetric spectrum with k/2 random positive-frequency bins
/// (excluding DC and Nyquist) and their mirrors; k must be even.
inline ComplexVector random_symmetric_spectrum(Index n, int k, Rng& rng, std::vector<Index>* support) {
  detail::require(k % 2 == 0 && k / 2 <= n / 2 - 1, ErrorKind::parameter, "bad spectral sparsity");
  std::vector<Index> pos(static_cast<std::size_t>(n / 2 - 1));
  std::iota(pos.begin(), pos.end(), Index{1});
  for (int i = 0; i < k / 2; ++i) {
    const Index j = i + Index(rng() % std::uint64_t(pos.size() - std::size_t(i)));
    std::swap(pos[std::size_t(i)], pos[std::size_t(j)]);
  }
  std::normal_distribution<double> normal;
  ComplexVector X = ComplexVector::Zero(n);
  if (support) support->clear();
  for (int i = 0; i < k / 2; ++i) {
    const Index b = pos[std::size_t(i)];
    const Complex v(normal(rng), normal(rng));
    X[b] = v;
    X[n - b] = std::conj(v);
    if (support) {
      support->push_back(b);
      support->push_back(n - b);
    }
  }
  return X;
}

// ---------------------------------------------------------------------------
// Experiments

struct CellContext {
  Json params;
  int trials = 0;
  std::uint64_t seed_base = 0;
  int threads = 1;
};

/// Rows for one grid cell: statistic columns only (grid values and audit
/// columns are added by the runner).
using CellRows = std::vector<std::vector<Cell>>;

struct ExperimentDef {
  std::string name;
  std::string summary;
  Json defaults;                        // every accepted base key
  std::vector<std::string> grid_keys;   // sweepable keys, in canonical order
  Json default_grid;                    // key -> list
  int default_trials = 1;
  std::vector<std::string> stat_columns;
  std::function<CellRows(const CellContext&)> run_cell;
  std::function<void(const Json&)> check_cell;  // optional early validation
};

namespace experiments {

// -- phase transition -------------------------------------------------------

inline ExperimentDef phase_transition() {
  ExperimentDef d;
  d.name = "phase_transition";
  d.summary = "fixed-k OMP success rate over (M, k) at fixed N on dense matrices";
  d.defaults = {{"N", 200}, {"M", 66}, {"k", 10}, {"distribution", "gaussian"}, {"success_mse", 1e-3}};
  d.grid_keys = {"M", "k"};
  d.default_grid = {{"M", {20, 40, 66, 80, 100, 120, 140, 160, 180}},
                    {"k", {0, 1, 2, 5, 10, 15, 20, 25, 30, 40, 50, 60, 70, 80}}};
  d.default_trials = 500;
  d.stat_columns = {"N", "applicable", "success_rate", "mean_mse"};
  d.check_cell = [](const Json& p) {
    detail::require(detail::integer(p, "M") >= 1 && detail::integer(p, "k") >= 0 &&
                        detail::integer(p, "M") <= detail::integer(p, "N"),
                    ErrorKind::configuration, "phase transition needs 1 <= M <= N and k >= 0");
  };
  d.run_cell = [](const CellContext& c) -> CellRows {
    const int N = detail::integer(c.params, "N");
    const int M = detail::integer(c.params, "M");
    const int k = detail::integer(c.params, "k");
    const double thr = detail::num(c.params, "success_mse");
    const auto dist = c.params.at("distribution").get<std::string>() == "bernoulli"
                          ? MatrixDistribution::bernoulli_pm1
                          : MatrixDistribution::gaussian_standard;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (k > M) return {{std::int64_t(N), false, nan, nan}};
    const auto mse = parallel_map(c.trials, c.threads, [&](int t) {
      const std::uint64_t s = derive_seed(c.seed_base, std::uint64_t(t));
      const Matrix<double> A = draw_matrix({M, N, dist, derive_seed(s, "matrix")});
      Rng rng(derive_seed(s, "signal"));
      const RealVector x = random_sparse_real(N, k, rng);
      const RealVector y = A * x;
      const auto r = omp(Vector<double>(y), DenseDictionary<double>(A), k);
      return relative_error_sq((x - r.estimate).norm(), x.norm());
    });
    double hits = 0;
    for (double e : mse) hits += e <= thr;
    return {{std::int64_t(N), true, hits / c.trials, mean_of(mse)}};
  };
  return d;
}

// -- interval coverage ------------------------------------------------------

inline ExperimentDef lemma1_coverage() {
  ExperimentDef d;
  d.name = "lemma1_coverage";
  d.summary = "coverage of the validation interval against its probability floor";
  d.defaults = {{"N", 200},          {"k", 10},  {"training", 100},        {"eta", 0.2},
                {"v", 40},           {"C", 1.0}, {"noise_scale_min", 1e-3}, {"noise_scale_max", 1.0}};
  d.grid_keys = {"eta", "v"};
  d.default_grid = {{"eta", {0.2, 0.3, 0.4}}, {"v", {20, 40, 60, 80}}};
  d.default_trials = 500;
  d.stat_columns = {"coverage", "floor", "mean_ratio"};
  d.check_cell = [](const Json& p) {
    const double eta = detail::num(p, "eta");
    detail::require(eta > 0 && eta < 0.5, ErrorKind::configuration, "eta must lie in (0, 1/2)");
    detail::require(detail::integer(p, "v") >= 1, ErrorKind::configuration, "v must be positive");
  };
  d.run_cell = [](const CellContext& c) -> CellRows {
    const int N = detail::integer(c.params, "N");
    const int k = detail::integer(c.params, "k");
    const int r = detail::integer(c.params, "training");
    const int v = detail::integer(c.params, "v");
    const double eta = detail::num(c.params, "eta");
    const double C = detail::num(c.params, "C");
    const double lo = std::log(detail::num(c.params, "noise_scale_min"));
    const double hi = std::log(detail::num(c.params, "noise_scale_max"));
    struct Out {
      bool covered;
      double ratio;
    };
    const auto res = parallel_map(c.trials, c.threads, [&](int t) {
      const std::uint64_t s = derive_seed(c.seed_base, std::uint64_t(t));
      Rng rng(derive_seed(s, "signal"));
      std::vector<Index> support;
      const ComplexVector X = random_symmetric_spectrum(N, k, rng, &support);
      const RealVector x = fft_inverse(X).real();
      // Estimate: least squares on the true support from noisy training data
      // at a random noise scale, so estimate quality varies across trials.
      const RealMatrix phi = draw_matrix({r, N, MatrixDistribution::gaussian_standard, derive_seed(s, "matrix")});
      std::uniform_real_distribution<double> scale(lo, hi);
      std::normal_distribution<double> normal;
      const RealVector y0 = phi * x;
      const double sigma = std::exp(scale(rng)) * y0.norm() / std::sqrt(double(r));
      ComplexVector y = y0.cast<Complex>();
      for (Index i = 0; i < y.size(); ++i) y[i] += sigma * normal(rng);
      const ComplexMatrix A = sensing_dictionary(phi, N);
      const ComplexVector X_hat = least_squares_on_support<Complex>(y, A, support).estimate;
      const RealMatrix psi = draw_matrix({v, N, MatrixDistribution::gaussian_standard, derive_seed(s, "testing")});
      const ComplexVector V = (psi * x).cast<Complex>();
      const double rho = validation_parameter(V, psi, Spectrum{X_hat, 0.0});
      const ValidationReport rep = confidence_interval(rho, 1, N, eta, v, C);
      const double err = (X - X_hat).norm();
      return Out{err >= rep.interval_low && err <= rep.interval_high, rep.scaled_rho / err};
    });
    double hits = 0;
    std::vector<double> ratios;
    for (const auto& o : res) {
      hits += o.covered;
      ratios.push_back(o.ratio);
    }
    return {{hits / c.trials, noiseless_confidence_floor(v, eta, C), mean_of(ratios)}};
  };
  return d;
}

inline FrameSetup frame_setup(const Json& p) {
  FrameSetup fs;
  fs.frame = p.at("frame").get<FrameConfig>();
  fs.halting = parse_halting(p.at("halting"));
  fs.draw = parse_signal(p.at("signal"), fs.frame);
  if (p.contains("detector")) fs.detector = p.at("detector").get<DetectorConfig>();
  detail::require((fs.halting.mode == HaltingMode::noisy) == (fs.frame.noise_std > 0), ErrorKind::configuration,
                  "halting mode must match the frame noise setting");
  return fs;
}

// -- error tracking ---------------------------------------------------------

inline ExperimentDef error_tracking() {
  ExperimentDef d;
  d.name = "error_tracking";
  d.summary = "per-step scaled rho against the true error over the ACSS loop";
  d.defaults = {{"v_per_step", 40},
                {"trace_all_steps", false},
                {"precision_floor", 1e-9},
                {"frame", default_frame_json()},
                {"halting", default_halting_json()},
                {"signal", default_signal_json()}};
  d.grid_keys = {"v_per_step"};
  d.default_grid = {{"v_per_step", {40, 60}}};
  d.default_trials = 200;
  d.stat_columns = {"p",
                    "trials_reaching",
                    "mean_scaled_rho",
                    "mean_true_error",
                    "mean_interval_low",
                    "mean_interval_high",
                    "rho_in_error_band",
                    "error_in_rho_band",
                    "pairs_at_floor",
                    "halt_fraction",
                    "criterion_fires",
                    "mean_p_final",
                    "success_rate"};
  d.check_cell = [](const Json& p) {
    FrameSetup fs = frame_setup(p);
    fs.frame.testing_per_step = detail::integer(p, "v_per_step");
    fs.frame.validate();
    fs.halting.validate();
    detail::require(fs.halting.mode == HaltingMode::noiseless, ErrorKind::configuration,
                    "error tracking runs the noiseless criterion");
  };
  d.run_cell = [](const CellContext& c) -> CellRows {
    FrameSetup fs = frame_setup(c.params);
    fs.frame.testing_per_step = detail::integer(c.params, "v_per_step");
    const bool trace_all = c.params.at("trace_all_steps").get<bool>();
    const double floor_rel = detail::num(c.params, "precision_floor");
    const double eta = fs.halting.confidence_factor;
    const int p_max = max_steps(fs.frame);
    const auto outcomes = parallel_map(c.trials, c.threads, [&](int t) {
      const std::uint64_t s = derive_seed(c.seed_base, std::uint64_t(t));
      const WidebandSignalSpec spec = random_multiband_spec(fs.draw, derive_seed(s, "signal"));
      return run_frame(spec, fs.frame, fs.halting, fs.detector, derive_seed(s, "frame"), {trace_all});
    });
    double p_final = 0, success = 0;
    for (const auto& o : outcomes) {
      p_final += o.steps_used;
      success += o.halted && o.relative_mse <= 1e-3;
    }
    CellRows rows;
    for (int p = 1; p <= p_max; ++p) {
      std::vector<double> srho, err, low, high;
      double in_err_band = 0, in_rho_band = 0, at_floor = 0, halted_here = 0;
      for (const auto& o : outcomes) {
        if (o.halted && o.steps_used == p) ++halted_here;
        if (int(o.steps.size()) < p) continue;
        const StepTrace& st = o.steps[std::size_t(p - 1)];
        srho.push_back(st.scaled_rho);
        err.push_back(st.true_error);
        low.push_back(st.scaled_rho / (1 + eta));
        high.push_back(st.scaled_rho / (1 - eta));
        // Both sides at roundoff level: the estimate is exact to working
        // precision and the ratio carries no information.
        const double tol = floor_rel * st.signal_norm;
        if (st.true_error <= tol && st.scaled_rho <= tol) {
          ++at_floor;
          ++in_err_band;
          ++in_rho_band;
          continue;
        }
        const double e = st.true_error, sr = st.scaled_rho;
        in_err_band += sr >= e / (1 + eta) && sr <= e / (1 - eta);
        in_rho_band += e >= sr / (1 + eta) && e <= sr / (1 - eta);
      }
      const double n = double(srho.size());
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rows.push_back({std::int64_t(p), std::int64_t(srho.size()), mean_of(srho), mean_of(err), mean_of(low),
                      mean_of(high), n > 0 ? in_err_band / n : nan, n > 0 ? in_rho_band / n : nan,
                      std::int64_t(at_floor), halted_here / c.trials, halted_here > 0, p_final / c.trials,
                      success / c.trials});
    }
    return rows;
  };
  return d;
}

// -- ACSS vs traditional CS -------------------------------------------------

inline ExperimentDef acss_vs_cs() {
  ExperimentDef d;
  d.name = "acss_vs_cs";
  d.summary = "ACSS success rate against single-shot OMP at the full frame budget";
  d.defaults = {{"fs_hz", 1e9},
                {"k", 32},
                {"success_mse", 1e-3},
                {"frame", default_frame_json()},
                {"halting", default_halting_json()},
                {"signal", default_signal_json()}};
  d.grid_keys = {"fs_hz", "k"};
  d.default_grid = {{"fs_hz", {750e6, 1e9}}, {"k", {0, 16, 32, 48, 64}}};
  d.default_trials = 100;
  d.stat_columns = {"acss_success", "cs_success", "acss_mean_p", "acss_mean_mse",
                    "cs_mean_mse",  "cs_measurements", "baseline"};
  d.check_cell = [](const Json& p) {
    FrameSetup fs = frame_setup(p);
    fs.frame.sub_nyquist_hz = detail::num(p, "fs_hz");
    fs.frame.validate();
    fs.halting.validate();
  };
  d.run_cell = [](const CellContext& c) -> CellRows {
    FrameSetup fs = frame_setup(c.params);
    fs.frame.sub_nyquist_hz = detail::num(c.params, "fs_hz");
    fs.draw.sparsity = detail::integer(c.params, "k");
    const double thr = detail::num(c.params, "success_mse");
    const int p_max = max_steps(fs.frame);
    const Index N = fs.frame.nyquist_per_step();
    const Index M_cs = fs.frame.measurements_per_step() * p_max;
    struct Out {
      double acss_mse, cs_mse;
      int p;
      bool acss_ok;
    };
    const auto res = parallel_map(c.trials, c.threads, [&](int t) {
      const std::uint64_t s = derive_seed(c.seed_base, std::uint64_t(t));
      const WidebandSignalSpec spec = random_multiband_spec(fs.draw, derive_seed(s, "signal"));
      const SensingOutcome o = run_frame(spec, fs.frame, fs.halting, fs.detector, derive_seed(s, "frame"));
      // Baseline: one acquisition of the whole sensing budget, OMP at k_max.
      const TimeSeries x = synthesize_signal(spec, fs.frame.time_step_s * p_max,
                                             {fs.frame.synthesis, fs.frame.time_step_s});
      const RealMatrix phi = draw_matrix({M_cs, N * p_max, fs.frame.distribution, derive_seed(s, "cs_matrix")});
      ComplexVector y = (phi * x.samples).cast<Complex>();
      if (fs.frame.noise_std > 0) y += draw_complex_noise(M_cs, fs.frame.noise_std, derive_seed(s, "cs_noise"));
      const int iters = int(std::min<Index>(fs.halting.max_sparsity, M_cs));
      const auto r = omp(y, FourierDictionary(phi), iters);
      const ComplexVector X = fft_forward(x.samples);
      const double cs_mse = relative_error_sq((X - r.estimate).norm(), X.norm());
      return Out{o.relative_mse, cs_mse, o.steps_used, o.halted && o.relative_mse <= thr};
    });
    double acss_ok = 0, cs_ok = 0;
    std::vector<double> p, am, cm;
    for (const auto& o : res) {
      acss_ok += o.acss_ok;
      cs_ok += o.cs_mse <= thr;
      p.push_back(o.p);
      am.push_back(o.acss_mse);
      cm.push_back(o.cs_mse);
    }
    return {{acss_ok / c.trials, cs_ok / c.trials, mean_of(p), mean_of(am), mean_of(cm), std::int64_t(M_cs),
             std::string("single_shot_full_budget_omp_kmax")}};
  };
  return d;
}

// -- halting probability (noisy criterion) ----------------------------------

inline ExperimentDef halting_probability() {
  ExperimentDef d;
  d.name = "halting_probability";
  d.summary = "empirical probability of the noisy criterion with an exact estimate";
  d.defaults = {{"delta", 1.0}, {"N", 16}, {"theta_over_delta", 0.6}, {"v", 40}};
  d.grid_keys = {"theta_over_delta", "v"};
  d.default_grid = {{"theta_over_delta", {0.6, 0.65, 0.7}}, {"v", {10, 20, 30, 40, 50, 60, 70, 80, 90, 100}}};
  d.default_trials = 2000;
  d.stat_columns = {"halt_probability", "bound_value", "gap"};
  d.check_cell = [](const Json& p) {
    detail::require(detail::num(p, "delta") > 0 && detail::num(p, "theta_over_delta") > 0 &&
                        detail::integer(p, "v") >= 1,
                    ErrorKind::configuration, "need delta > 0, theta > 0 and v >= 1");
  };
  d.run_cell = [](const CellContext& c) -> CellRows {
    const double delta = detail::num(c.params, "delta");
    const double theta = detail::num(c.params, "theta_over_delta") * delta;
    const int v = detail::integer(c.params, "v");
    const int N = detail::integer(c.params, "N");
    const auto halts = parallel_map(c.trials, c.threads, [&](int t) {
      const std::uint64_t s = derive_seed(c.seed_base, std::uint64_t(t));
      Rng rng(derive_seed(s, "signal"));
      std::normal_distribution<double> normal;
      TimeSeries x{RealVector(N), 1.0, 0.0};
      for (Index i = 0; i < N; ++i) x.samples[i] = normal(rng);
      const RealMatrix psi = draw_matrix({v, std::max(N, v), MatrixDistribution::gaussian_standard,
                                          derive_seed(s, "matrix")})
                                 .leftCols(N);
      ComplexVector V = (psi * x.samples).cast<Complex>();
      V += draw_complex_noise(v, delta, derive_seed(s, "noise"));
      const double rho = validation_parameter(V, psi, dft(x));
      return halt_noisy(rho, delta, theta) ? 1 : 0;
    });
    const double emp = mean_of(halts);
    const double bound = confidence_floor_noisy(v, theta, delta);
    return {{emp, bound, emp - bound}};
  };
  return d;
}

// -- SASR vs OMP ------------------------------------------------------------

inline ExperimentDef sasr_vs_omp() {
  ExperimentDef d;
  d.name = "sasr_vs_omp";
  d.summary = "SASR against OMP forced to k_max on one noisy slot";
  d.defaults = {{"k", 32},
                {"delta_sq", 1.0},
                {"v", 40},
                {"k_max", 80},
                {"theta_over_delta", 0.6},
                {"varrho", nullptr},
                {"frame", default_frame_json()},
                {"signal", default_signal_json()}};
  d.grid_keys = {"k", "delta_sq"};
  d.default_grid = {{"k", {16, 32, 48}}, {"delta_sq", {1.0, 4.0}}};
  d.default_trials = 200;
  d.stat_columns = {"sasr_mse", "omp_mse", "paired_mse_difference", "sasr_mean_iterations",
                    "sasr_criterion_rate", "theta"};
  d.check_cell = [](const Json& p) {
    detail::require(detail::num(p, "delta_sq") > 0, ErrorKind::configuration,
                    "sasr_vs_omp is a noisy experiment; delta_sq must be positive");
    detail::require(detail::integer(p, "k_max") >= 1, ErrorKind::configuration, "k_max must be positive");
  };
  d.run_cell = [](const CellContext& c) -> CellRows {
    FrameSetup fs;
    fs.frame = c.params.at("frame").get<FrameConfig>();
    fs.draw = parse_signal(c.params.at("signal"), fs.frame);
    const double delta = std::sqrt(detail::num(c.params, "delta_sq"));
    fs.draw.sparsity = detail::integer(c.params, "k");
    fs.draw.noise_std = delta;  // SNR is taken against the actual noise level
    const Index v = detail::integer(c.params, "v");
    const Index N = fs.frame.nyquist_per_step();
    const Index M = fs.frame.measurements_per_step();
    HaltingConfig h;
    h.mode = HaltingMode::noisy;
    h.noise_std = delta;
    h.max_sparsity = detail::integer(c.params, "k_max");
    if (!c.params.at("varrho").is_null())
      h.confidence_floor = detail::num(c.params, "varrho");
    else
      h.accuracy = detail::num(c.params, "theta_over_delta") * delta;
    struct Out {
      double sasr, omp, iters;
      bool criterion;
    };
    const auto res = parallel_map(c.trials, c.threads, [&](int t) {
      const std::uint64_t s = derive_seed(c.seed_base, std::uint64_t(t));
      const WidebandSignalSpec spec = random_multiband_spec(fs.draw, derive_seed(s, "signal"));
      const TimeSeries x = synthesize_signal(spec, fs.frame.time_step_s, {fs.frame.synthesis, fs.frame.time_step_s});
      const RealMatrix mat = draw_matrix({M, N, fs.frame.distribution, derive_seed(s, "matrix")});
      const RowSplit split = split_rows(M, {v, fs.frame.split, derive_seed(s, "split")});
      MeasurementSet ms = acquire(x, select_rows(mat, split.training), select_rows(mat, split.testing), delta,
                                  derive_seed(s, "noise"));
      ms.step_index = 1;
      ms.step_nyquist_count = N;
      const SpectralRecovery a = sasr(ms, h);
      // Same training data, no validation: the classic fixed-iteration run.
      const int iters = int(std::min<Index>(h.max_sparsity, ms.training_size()));
      const auto b = omp(ms.training, FourierDictionary(ms.phi), iters);
      const ComplexVector X = fft_forward(x.samples);
      return Out{significant_bin_mse(X, a.estimate), significant_bin_mse(X, b.estimate), double(a.iterations),
                 a.halted_by == HaltReason::criterion};
    });
    std::vector<double> sm, om, diff, it;
    double crit = 0;
    for (const auto& o : res) {
      sm.push_back(o.sasr);
      om.push_back(o.omp);
      diff.push_back(o.sasr - o.omp);
      it.push_back(o.iters);
      crit += o.criterion;
    }
    const double theta = h.confidence_floor ? accuracy_from_confidence(*h.confidence_floor, delta, v) : h.accuracy;
    return {{mean_of(sm), mean_of(om), mean_of(diff), mean_of(it), crit / c.trials, theta}};
  };
  return d;
}

// -- single frame -----------------------------------------------------------

inline ExperimentDef single_frame() {
  ExperimentDef d;
  d.name = "single_frame";
  d.summary = "step-by-step trace of individual ACSS frames";
  d.defaults = {{"spec", nullptr},
                {"frame", default_frame_json()},
                {"halting", default_halting_json()},
                {"signal", default_signal_json()},
                {"detector", Json{{"bands", Json::array()}, {"lambda", 1.0}}}};
  d.default_trials = 1;
  d.stat_columns = {"trial",        "p",           "M",           "r",          "v",
                    "iterations",   "recovery_halt", "rho",        "scaled_rho", "rho_threshold",
                    "criterion_met", "relative_mse", "halted",     "steps_used", "saved_slots",
                    "bands_h1"};
  d.check_cell = [](const Json& p) {
    const FrameSetup fs = frame_setup(p);
    fs.frame.validate();
    fs.halting.validate();
  };
  d.run_cell = [](const CellContext& c) -> CellRows {
    const FrameSetup fs = frame_setup(c.params);
    const bool fixed = !c.params.at("spec").is_null();
    const auto outcomes = parallel_map(c.trials, c.threads, [&](int t) {
      const std::uint64_t s = derive_seed(c.seed_base, std::uint64_t(t));
      const WidebandSignalSpec spec = fixed ? c.params.at("spec").get<WidebandSignalSpec>()
                                            : random_multiband_spec(fs.draw, derive_seed(s, "signal"));
      return run_frame(spec, fs.frame, fs.halting, fs.detector, derive_seed(s, "frame"));
    });
    CellRows rows;
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
      const auto& o = outcomes[t];
      std::int64_t h1 = 0;
      for (const auto& dcs : o.decisions) h1 += dcs.decision == Decision::H1;
      for (const auto& st : o.steps)
        rows.push_back({std::int64_t(t), std::int64_t(st.p), std::int64_t(st.measurements),
                        std::int64_t(st.training), std::int64_t(st.testing), std::int64_t(st.iterations),
                        std::string(to_string(st.recovery_halt)), st.rho, st.scaled_rho, st.rho_threshold,
                        st.criterion_met, st.relative_mse, o.halted, std::int64_t(o.steps_used),
                        std::int64_t(o.saved_slots), h1});
    }
    return rows;
  };
  return d;
}

}  // namespace experiments

/// One frame run outside the experiment grid: the `frame` and
/// `calibrate-lambda` subcommands.
struct FrameRequest {
  std::optional<WidebandSignalSpec> spec;
  FrameSetup setup;
  std::uint64_t seed = 1;
  RunOptions options;
  int calibration_trials = 200;
  double false_alarm = 0.05;

  WidebandSignalSpec signal() const {
    return spec ? *spec : random_multiband_spec(setup.draw, derive_seed(seed, "signal"));
  }
};

inline Json frame_request_defaults() {
  return Json{{"seed", 1},
              {"spec", nullptr},
              {"trace_all_steps", false},
              {"calibration_trials", 200},
              {"false_alarm", 0.05},
              {"frame", default_frame_json()},
              {"halting", default_halting_json()},
              {"signal", default_signal_json()},
              {"detector", Json{{"bands", Json::array()}, {"lambda", 1.0}}}};
}

inline FrameRequest parse_frame_request(const Json& j) {
  Json p = frame_request_defaults();
  detail::overlay(p, j, "frame request");
  FrameRequest r;
  r.setup = experiments::frame_setup(p);
  r.setup.frame.validate();
  r.setup.halting.validate();
  if (!p.at("spec").is_null()) {
    r.spec = p.at("spec").get<WidebandSignalSpec>();
    r.spec->validate();
  }
  r.seed = p.at("seed").get<std::uint64_t>();
  r.options.trace_all_steps = p.at("trace_all_steps").get<bool>();
  r.calibration_trials = detail::integer(p, "calibration_trials");
  r.false_alarm = detail::num(p, "false_alarm");
  return r;
}

inline const std::vector<ExperimentDef>& registry() {
  static const std::vector<ExperimentDef> defs = {
      experiments::phase_transition(), experiments::lemma1_coverage(),     experiments::error_tracking(),
      experiments::acss_vs_cs(),       experiments::halting_probability(), experiments::sasr_vs_omp(),
      experiments::single_frame()};
  return defs;
}

inline const ExperimentDef& find_experiment(const std::string& name) {
  for (const auto& d : registry())
    if (d.name == name) return d;
  throw Error(ErrorKind::configuration, "unknown experiment '" + name + "'");
}

/// A fully resolved run: parameters merged, grid expanded and checked.
struct ExperimentPlan {
  const ExperimentDef* def = nullptr;
  std::vector<Json> cells;  // merged parameters, grid values applied
  std::vector<std::vector<Json>> cell_grid_values;
  std::vector<std::string> swept;  // grid keys, canonical order
  int trials = 0;
  int threads = 1;
  std::uint64_t master_seed = 0;
  std::string config_hash;
};

inline ExperimentPlan plan_experiment(const ExperimentConfig& cfg) {
  ExperimentPlan plan;
  plan.def = &find_experiment(cfg.name);
  const ExperimentDef& def = *plan.def;
  plan.trials = cfg.trials > 0 ? cfg.trials : def.default_trials;
  detail::require(plan.trials >= 1, ErrorKind::configuration, "trials must be at least 1");
  plan.threads = resolve_threads(cfg.threads);
  plan.master_seed = cfg.master_seed;

  Json params = def.defaults;
  detail::overlay(params, cfg.base, "base");

  detail::require(cfg.grid.is_object(), ErrorKind::configuration, "grid must be an object");
  Json grid = def.default_grid.is_null() ? Json::object() : def.default_grid;
  for (const auto& [k, v] : cfg.grid.items()) {
    detail::require(std::find(def.grid_keys.begin(), def.grid_keys.end(), k) != def.grid_keys.end(),
                    ErrorKind::configuration, "'" + k + "' is not a grid key of " + def.name);
    detail::require(v.is_array() && !v.empty(), ErrorKind::configuration, "grid values for '" + k + "' must be a non-empty list");
    grid[k] = v;
  }
  // Keys fixed in base are not swept.
  for (const auto& [k, v] : cfg.base.items())
    if (!cfg.grid.contains(k) && grid.contains(k)) grid.erase(k);

  for (const auto& k : def.grid_keys)
    if (grid.contains(k)) plan.swept.push_back(k);
  const std::vector<std::string>& keys = plan.swept;
  std::size_t cells = 1;
  for (const auto& k : keys) cells *= grid[k].size();
  for (std::size_t c = 0; c < cells; ++c) {
    // Last key varies fastest.
    Json cell = params;
    std::vector<Json> values(keys.size());
    std::size_t rest = c;
    for (std::size_t i = keys.size(); i-- > 0;) {
      const Json& list = grid[keys[i]];
      values[i] = list[rest % list.size()];
      rest /= list.size();
      cell[keys[i]] = values[i];
    }
    if (def.check_cell) def.check_cell(cell);
    plan.cells.push_back(std::move(cell));
    plan.cell_grid_values.push_back(std::move(values));
  }

  Json canonical = {{"experiment", def.name}, {"trials", plan.trials}, {"seed", plan.master_seed},
                    {"params", params},       {"grid", grid}};
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, fnv1a64(canonical.dump()));
  plan.config_hash = hex;
  return plan;
}

inline Cell json_to_cell(const Json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline ResultTable run_plan(const ExperimentPlan& plan) {
  const ExperimentDef& def = *plan.def;
  ResultTable table;
  table.experiment = def.name;
  table.config_hash = plan.config_hash;

  table.columns = plan.swept;
  for (const auto& c : def.stat_columns) table.columns.push_back(c);
  for (const char* c : {"trials", "seed_base", "config_hash"}) table.columns.push_back(c);

  const std::uint64_t exp_seed = derive_seed(plan.master_seed, def.name);
  for (std::size_t c = 0; c < plan.cells.size(); ++c) {
    CellContext ctx;
    ctx.params = plan.cells[c];
    ctx.trials = plan.trials;
    ctx.seed_base = derive_seed(exp_seed, std::uint64_t(c));
    ctx.threads = plan.threads;
    const CellRows rows = def.run_cell(ctx);
    char seed_hex[17];
    std::snprintf(seed_hex, sizeof seed_hex, "%016" PRIx64, ctx.seed_base);
    for (const auto& r : rows) {
      std::vector<Cell> full;
      for (const auto& v : plan.cell_grid_values[c]) full.push_back(json_to_cell(v));
      full.insert(full.end(), r.begin(), r.end());
      full.push_back(std::int64_t(plan.trials));
      full.push_back(std::string(seed_hex));
      full.push_back(plan.config_hash);
      table.rows.push_back(std::move(full));
    }
  }
  return table;
}

inline ResultTable run_experiment(const ExperimentConfig& cfg) { return run_plan(plan_experiment(cfg)); }

inline std::string serialize(const ResultTable& t, const std::string& format) {
  if (format == "csv") return to_csv(t);
  if (format == "json") return to_json_text(t);
  throw Error(ErrorKind::configuration, "unknown format '" + format + "'");
}

}  // namespace acss
