// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "acss/experiments.hpp"

using namespace acss;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

ResultTable run(const char* text) { return run_experiment(nlohmann::json::parse(text).get<ExperimentConfig>()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Row index by grid values.
std::size_t find_row(const ResultTable& t, std::vector<std::pair<std::string, double>> keys) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    bool ok = true;
    for (const auto& [k, v] : keys) ok = ok && std::abs(t.number(r, k) - v) <= 1e-9 * std::max(1.0, std::abs(v));
    if (ok) return r;
  }
  throw Error(ErrorKind::parameter, "row not found");
}

Verdict phase_transition() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const ResultTable t = run(R"({"name":"phase_transition","trials":500,"base":{"N":200}})");
  const double secs = seconds_since(t0);
  const double good = t.number(find_row(t, {{"M", 66}, {"k", 10}}), "success_rate");
  const double bad = t.number(find_row(t, {{"M", 20}, {"k", 20}}), "success_rate");
  v.check(good >= 0.95, "success at (66,10) >= 0.95");
  v.check(bad <= 0.05, "success at (20,20) <= 0.05");
  double worst = 0.0;
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    if (t.number(r, "M") != t.number(r - 1, "M") || !t.number(r, "applicable") || !t.number(r - 1, "applicable"))
      continue;
    worst = std::max(worst, t.number(r, "success_rate") - t.number(r - 1, "success_rate"));
  }
  v.check(worst <= 0.03, "monotone in k within 0.03");
  v.check(secs < 600, "runtime < 10 min");
  v.note(fmt("(66,10)=%.3f (20,20)=%.3f", good, bad) + fmt(" max rise in k %.3f, %.0f s", worst, secs));
  return v;
}

Verdict lemma1() {
  Verdict v;
  const ResultTable t = run(R"({"name":"lemma1_coverage","trials":500,"base":{"C":1.0},
                                "grid":{"eta":[0.2,0.3,0.4],"v":[20,40,60,80]}})");
  double min_margin = 1.0, worst_drop = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    min_margin = std::min(min_margin, t.number(r, "coverage") - t.number(r, "floor"));
    if (r > 0 && t.number(r, "eta") == t.number(r - 1, "eta"))
      worst_drop = std::max(worst_drop, t.number(r - 1, "coverage") - t.number(r, "coverage"));
  }
  v.check(min_margin >= 0, "coverage >= floor in every cell");
  v.check(worst_drop <= 0.03, "coverage increasing in v within 0.03");
  v.note(fmt("min(coverage - floor) %.2e, max drop in v %.4f over %.0f cells", min_margin, worst_drop,
             double(t.rows.size())));
  return v;
}

// Fraction of (trial, p) pairs whose scaled rho is inside the error band,
// over rows with v_p >= 40.
std::pair<double, double> band_fraction(const ResultTable& t, double* floor_pairs) {
  double hit = 0, total = 0;
  if (floor_pairs) *floor_pairs = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double n = t.number(r, "trials_reaching");
    if (n == 0 || t.number(r, "v_per_step") * t.number(r, "p") < 40) continue;
    hit += t.number(r, "rho_in_error_band") * n;
    total += n;
    if (floor_pairs) *floor_pairs += t.number(r, "pairs_at_floor");
  }
  return {total > 0 ? hit / total : 0.0, total};
}

Verdict error_tracking() {
  Verdict v;
  const ResultTable t = run(R"({"name":"error_tracking","trials":200,"grid":{"v_per_step":[40,60]}})");
  const double p40 = t.number(find_row(t, {{"v_per_step", 40}, {"p", 1}}), "mean_p_final");
  const double p60 = t.number(find_row(t, {{"v_per_step", 60}, {"p", 1}}), "mean_p_final");
  v.check(p60 <= 4, "mean halting step <= 4 at v = 60");
  v.check(p40 <= 7, "mean halting step <= 7 at v = 40");
  double at_floor = 0;
  const auto [frac, pairs] = band_fraction(t, &at_floor);
  v.check(frac >= 0.9, "scaled rho within the band for >= 90% of pairs");
  v.note(fmt("mean p: v=40 %.2f, v=60 %.2f", p40, p60) +
         fmt(", band %.3f over %.0f pairs (%.0f exact to roundoff)", frac, pairs, at_floor));
  // Non-periodic synthesis never becomes exactly sparse, so every pair
  // carries a nontrivial error; this is where the band is informative.
  const ResultTable d = run(R"({"name":"error_tracking","trials":4,"grid":{"v_per_step":[40,60]},
                                "base":{"frame":{"synthesis":"direct"}}})");
  const auto [dfrac, dpairs] = band_fraction(d, nullptr);
  v.check(dfrac >= 0.9, "band holds for >= 90% of pairs with nontrivial error");
  v.note(fmt("nontrivial-error band %.3f over %.0f pairs", dfrac, dpairs));
  return v;
}

Verdict halting_bound() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const ResultTable t = run(R"({"name":"halting_probability","trials":2000,"base":{"delta":1.0},
      "grid":{"theta_over_delta":[0.6,0.65,0.7],"v":[10,20,30,40,50,60,70,80,90,100]}})");
  const double secs = seconds_since(t0);
  double min_gap = 1.0, max_gap_40 = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double gap = t.number(r, "gap");
    min_gap = std::min(min_gap, gap);
    if (t.number(r, "v") >= 40) max_gap_40 = std::max(max_gap_40, gap);
  }
  v.check(min_gap >= 0, "empirical >= bound in every cell");
  v.check(max_gap_40 <= 0.1, "gap <= 0.1 for v >= 40");
  v.check(secs < 120, "runtime < 2 min");
  v.note(fmt("min gap %.2e, max gap (v>=40) %.4f, %.1f s", min_gap, max_gap_40, secs));
  return v;
}

Verdict sasr_vs_omp() {
  Verdict v;
  const ResultTable t = run(R"({"name":"sasr_vs_omp","trials":200,"base":{"k_max":80},
                                "grid":{"k":[16,32,48],"delta_sq":[1,4]}})");
  int below = 0, unpaired_below = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    below += t.number(r, "paired_mse_difference") < 0;
    unpaired_below += t.number(r, "sasr_mse") < t.number(r, "omp_mse");
  }
  const int cells = int(t.rows.size());
  v.check(below == cells, "SASR relative MSE strictly below OMP in every cell");
  const double it = t.number(find_row(t, {{"k", 32}, {"delta_sq", 1}}), "sasr_mean_iterations");
  v.check(std::abs(it - 32) <= 2, "mean SASR iterations within 2 of k = 32");
  v.note(fmt("paired difference negative in %.0f/%.0f cells (unpaired means below in %.0f)", below, cells,
             unpaired_below) +
         fmt(", iterations at k=32 %.2f", it));
  return v;
}

Verdict acss_vs_cs() {
  Verdict v;
  const ResultTable t = run(R"({"name":"acss_vs_cs","trials":10,
                                "grid":{"fs_hz":[750e6,1e9],"k":[16,32,48,64]}})");
  double worst = 1.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    worst = std::min(worst, t.number(r, "acss_success") - t.number(r, "cs_success"));
  v.check(worst >= 0, "ACSS success >= baseline at every k");
  double p = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) p = std::max(p, t.number(r, "acss_mean_p"));
  v.note(fmt("min(ACSS - baseline) %.3f over %.0f cells, max mean p %.2f", worst, double(t.rows.size()), p));
  return v;
}

Verdict dft_properties() {
  Verdict v;
  double rt = 0, pars = 0, sym = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    const Index n = 8 + Index(rng() % 2000);
    TimeSeries x{RealVector(n), 1.0, 0.0};
    for (Index i = 0; i < n; ++i) x.samples[i] = normal(rng);
    const Spectrum X = dft(x);
    rt = std::max(rt, (idft(X).samples - x.samples).cwiseAbs().maxCoeff());
    pars = std::max(pars, std::abs(X.bins.squaredNorm() / double(n) - x.samples.squaredNorm()) /
                              x.samples.squaredNorm());
    for (Index i = 1; i < n; ++i) sym = std::max(sym, std::abs(X.bins[i] - std::conj(X.bins[n - i])));
  }
  v.check(rt <= 1e-10 && pars <= 1e-10, "round trip and Parseval to 1e-10");
  v.check(sym <= 1e-10, "conjugate symmetry");
  v.note(fmt("round trip %.1e, Parseval %.1e, symmetry %.1e", rt, pars, sym));
  return v;
}

Verdict omp_invariants() {
  Verdict v;
  double worst_orth = 0, worst_rise = 0;
  bool growth = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Matrix<double> A = draw_matrix({40, 120, MatrixDistribution::gaussian_standard, seed});
    Rng rng(seed);
    std::normal_distribution<double> normal;
    RealVector y(40);
    for (Index i = 0; i < 40; ++i) y[i] = normal(rng);
    const HaltingCheck<double> check = [&](int t, const std::vector<Index>& s, const Vector<double>& coef) {
      growth = growth && Index(s.size()) == t;
      Matrix<double> As(40, Index(s.size()));
      for (std::size_t c = 0; c < s.size(); ++c) As.col(Index(c)) = A.col(s[c]);
      const RealVector r = y - As * coef;
      worst_orth = std::max(worst_orth, (As.transpose() * r).cwiseAbs().maxCoeff() /
                                            (As.colwise().norm().maxCoeff() * y.norm()));
      return std::make_pair(0.0, false);
    };
    const auto res = sasr(Vector<double>(y), DenseDictionary<double>(A), 30, check);
    for (std::size_t t = 1; t < res.residual_trace.size(); ++t)
      worst_rise = std::max(worst_rise, res.residual_trace[t] - res.residual_trace[t - 1]);
  }
  v.check(worst_rise <= 0, "residual non-increasing");
  v.check(growth, "support grows by one per iteration");
  v.check(worst_orth < 1e-8, "refit orthogonality < 1e-8");

  int compared = 0, agree = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Matrix<double> A = draw_matrix({10, 16, MatrixDistribution::gaussian_standard, derive_seed(seed, "A")});
    Rng rng(derive_seed(seed, "x"));
    const int k = 1 + int(seed % 2);
    RealVector x = RealVector::Zero(16);
    std::normal_distribution<double> normal;
    for (int i = 0; i < k; ++i) x[Index(rng() % 16)] = normal(rng);
    const Vector<double> y = A * x;
    const auto r = omp(y, A, k);
    if ((y - A * r.estimate).norm() > 1e-10 * std::max(1.0, y.norm())) continue;
    ++compared;
    agree += (brute_force_l0(y, A, k) - r.estimate).norm() <= 1e-8 * std::max(1.0, x.norm());
  }
  v.check(agree == compared, "agreement with brute force whenever the OMP residual is zero");
  v.note(fmt("orthogonality %.1e, max residual rise %.1e", worst_orth, worst_rise) +
         fmt(", brute force %.0f/%.0f", agree, compared));
  return v;
}

Verdict formulas() {
  Verdict v;
  Rng rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_quad = 0;
  for (int i = 0; i < 50; ++i) {
    const double varrho = 0.001 + 0.9 * unit(rng), delta = 0.1 + 3 * unit(rng);
    const Index vv = 1 + Index(rng() % 500);
    const double theta = accuracy_from_confidence(varrho, delta, vv);
    worst_quad = std::max(worst_quad, std::abs(accuracy_quadratic(theta, varrho, delta, vv)) /
                                          (double(vv) * theta * theta));
  }
  v.check(worst_quad <= 1e-9, "accuracy solves its quadratic to 1e-9");

  bool round_trip = true;
  for (int i = 0; i < 50; ++i) {
    const double varrho = 0.001 + 0.9 * unit(rng), delta = 0.1 + 3 * unit(rng), theta = delta * (0.1 + unit(rng));
    round_trip = round_trip && confidence_floor_noisy(testing_size_noisy(theta, delta, varrho), theta, delta) >=
                                   1 - varrho - 1e-12;
  }
  v.check(round_trip, "testing size / confidence floor round trip");

  double worst_thr = 0;
  for (int i = 0; i < 5; ++i) {
    HaltingConfig cfg;
    cfg.error_threshold = 0.01 + 10 * unit(rng);
    cfg.confidence_factor = 0.01 + 0.48 * unit(rng);
    const Index p = 1 + Index(rng() % 8), N = 10 + Index(rng() % 2000);
    const double by_hand = cfg.error_threshold * (1 - cfg.confidence_factor) * std::sqrt(2.0) /
                           std::sqrt(3.141592653589793 * double(p) * double(N));
    const double got = halt_noiseless(0.0, p, N, cfg).threshold;
    worst_thr = std::max(worst_thr, std::abs(got - by_hand) / by_hand);
  }
  v.check(worst_thr <= 1e-12, "noiseless threshold matches direct arithmetic");
  v.note(fmt("quadratic residual %.1e, threshold mismatch %.1e", worst_quad, worst_thr));
  return v;
}

Verdict determinism() {
  Verdict v;
  const std::vector<const char*> configs = {
      R"({"name":"phase_transition","trials":20,"grid":{"M":[40,66],"k":[5,10]}})",
      R"({"name":"lemma1_coverage","trials":30,"grid":{"eta":[0.2],"v":[20,40]}})",
      R"({"name":"error_tracking","trials":4,"grid":{"v_per_step":[40]}})",
      R"({"name":"acss_vs_cs","trials":2,"grid":{"fs_hz":[1e9],"k":[16]}})",
      R"({"name":"halting_probability","trials":200,"grid":{"theta_over_delta":[0.6],"v":[10,40]}})",
      R"({"name":"sasr_vs_omp","trials":6,"grid":{"k":[16],"delta_sq":[1]}})",
      R"({"name":"single_frame","trials":3})"};
  int same = 0;
  for (const char* text : configs) {
    ExperimentConfig cfg = nlohmann::json::parse(text).get<ExperimentConfig>();
    std::vector<std::string> outputs;
    for (int threads : {1, 1, 3}) {
      cfg.threads = threads;
      const ResultTable t = run_experiment(cfg);
      outputs.push_back(to_csv(t) + to_json_text(t));
    }
    const bool ok = outputs[0] == outputs[1] && outputs[0] == outputs[2];
    same += ok;
    v.check(ok, cfg.name + " output identical across runs and thread counts");
  }
  v.note(fmt("%.0f/%.0f experiments byte-identical", same, double(configs.size())));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"phase transition", phase_transition},
      {"validation interval coverage", lemma1},
      {"error tracking", error_tracking},
      {"noisy halting bound", halting_bound},
      {"SASR vs OMP", sasr_vs_omp},
      {"ACSS vs traditional CS", acss_vs_cs},
      {"DFT properties", dft_properties},
      {"OMP invariants", omp_invariants},
      {"formula self-consistency", formulas},
      {"determinism", determinism}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failures += !v.pass;
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
