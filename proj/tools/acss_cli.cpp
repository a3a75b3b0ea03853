// acss: run experiments and single sensing frames from JSON configs.
//
// Exit codes: 0 success, 1 bad arguments or configuration, 2 runtime failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "acss/experiments.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct ConfigFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigFailure("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigFailure("'" + path + "' is not valid JSON: " + e.what());
  }
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    acss::write_atomic(out, text);
}

// Runs `plan` under the configuration exit code and `act` under the runtime
// one, so a typo never masquerades as a numerical failure.
template <class Plan, class Act>
int staged(Plan&& plan, Act&& act) {
  try {
    plan();
  } catch (const std::exception& e) {
    std::cerr << "acss: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    act();
  } catch (const std::exception& e) {
    std::cerr << "acss: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive compressive spectrum sensing simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path, format;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials, threads;

  auto* run = app.add_subcommand("run", "run an experiment config and write its result table");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed, "override the master seed");
  run->add_option("--trials", trials, "override the trial count")->check(CLI::PositiveNumber);
  run->add_option("--out", out_path, "output file (default: the config's, else stdout)");
  run->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  auto* frame = app.add_subcommand("frame", "run one sensing frame and print its outcome as JSON");
  frame->add_option("config", config_path, "frame config (JSON)")->required();
  frame->add_option("--seed", seed, "override the frame seed");
  frame->add_option("--out", out_path, "output file (default: stdout)");

  auto* calib = app.add_subcommand("calibrate-lambda", "estimate the energy threshold from noise-only frames");
  calib->add_option("config", config_path, "frame config (JSON)")->required();
  calib->add_option("--seed", seed, "override the seed");
  calib->add_option("--trials", trials, "noise-only frames")->check(CLI::PositiveNumber);
  calib->add_option("--out", out_path, "output file (default: stdout)");

  auto* list = app.add_subcommand("list", "list experiments, their grid keys and defaults");
  std::string show;
  list->add_option("experiment", show, "print the full defaults of one experiment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (list->parsed()) {
    return staged([] {},
                  [&] {
                    if (!show.empty()) {
                      const auto& d = acss::find_experiment(show);
                      std::cout << nlohmann::json{{"experiment", d.name},
                                                  {"trials", d.default_trials},
                                                  {"grid", d.default_grid},
                                                  {"base", d.defaults}}
                                       .dump(2)
                                << "\n";
                      return;
                    }
                    for (const auto& d : acss::registry()) {
                      std::cout << d.name << "  (" << d.default_trials << " trials";
                      if (!d.grid_keys.empty()) {
                        std::cout << "; grid:";
                        for (const auto& k : d.grid_keys) std::cout << " " << k;
                      }
                      std::cout << ")\n    " << d.summary << "\n";
                    }
                  });
  }

  if (run->parsed()) {
    acss::ExperimentPlan plan;
    std::string fmt, out;
    return staged(
        [&] {
          acss::ExperimentConfig cfg = read_json(config_path).get<acss::ExperimentConfig>();
          if (seed) cfg.master_seed = *seed;
          if (trials) cfg.trials = *trials;
          if (threads) cfg.threads = *threads;
          fmt = format.empty() ? cfg.format : format;
          if (fmt != "csv" && fmt != "json") throw ConfigFailure("format must be csv or json");
          out = out_path.empty() ? cfg.output_path : out_path;
          plan = acss::plan_experiment(cfg);
        },
        [&] { emit(acss::serialize(acss::run_plan(plan), fmt), out); });
  }

  if (frame->parsed()) {
    acss::FrameRequest req;
    return staged(
        [&] {
          req = acss::parse_frame_request(read_json(config_path));
          if (seed) req.seed = *seed;
        },
        [&] {
          const acss::SensingOutcome o =
              acss::run_frame(req.signal(), req.setup.frame, req.setup.halting, req.setup.detector,
                              acss::derive_seed(req.seed, "frame"), req.options);
          const nlohmann::json j = acss::to_json(o);
          emit(j.dump(2) + "\n", out_path);
        });
  }

  acss::FrameRequest req;
  return staged(
      [&] {
        req = acss::parse_frame_request(read_json(config_path));
        if (seed) req.seed = *seed;
        if (trials) req.calibration_trials = *trials;
      },
      [&] {
        const auto c = acss::calibrate_lambda(req.signal(), req.setup.frame, req.setup.halting, req.setup.detector,
                                              req.calibration_trials, req.false_alarm, req.seed);
        nlohmann::json j = {{"lambda", c.lambda}, {"mean_energy", c.mean_energy}, {"samples", c.samples},
                            {"false_alarm", req.false_alarm}};
        emit(j.dump(2) + "\n", out_path);
      });
}
