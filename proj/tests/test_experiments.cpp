#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "acss/experiments.hpp"

using namespace acss;

namespace {

ExperimentConfig config(const char* text) { return nlohmann::json::parse(text).get<ExperimentConfig>(); }

}  // namespace

TEST(ResultTable, CsvFormatting) {
  ResultTable t;
  t.columns = {"a", "b", "c", "d"};
  t.rows.push_back({std::int64_t(3), 0.1, std::string("x,y"), true});
  t.rows.push_back({std::int64_t(-1), std::numeric_limits<double>::quiet_NaN(), std::string("plain"), false});
  EXPECT_EQ(to_csv(t), "a,b,c,d\n3,0.1,\"x,y\",true\n-1,nan,plain,false\n");
  const auto j = nlohmann::json::parse(to_json_text(t));
  EXPECT_TRUE(j["rows"][1]["b"].is_null());
  EXPECT_EQ(j["rows"][0]["c"], "x,y");
}

TEST(ParallelMap, OrderIndependentOfThreads) {
  auto f = [](int i) { return derive_seed(42, std::uint64_t(i)); };
  EXPECT_EQ(parallel_map(100, 1, f), parallel_map(100, 4, f));
}

TEST(ParallelMap, PropagatesExceptions) {
  EXPECT_THROW(parallel_map(10, 3,
                            [](int i) {
                              if (i == 7) throw Error(ErrorKind::parameter, "boom");
                              return i;
                            }),
               Error);
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(config(R"({"name":"phase_transition","trails":3})"), Error);
  EXPECT_THROW(plan_experiment(config(R"({"name":"phase_transition","base":{"NN":3}})")), Error);
  EXPECT_THROW(plan_experiment(config(R"({"name":"phase_transition","grid":{"N":[100]}})")), Error);
  EXPECT_THROW(plan_experiment(config(R"({"name":"no_such_thing"})")), Error);
  EXPECT_THROW(plan_experiment(config(R"({"name":"sasr_vs_omp","grid":{"delta_sq":[0]}})")), Error);
  EXPECT_THROW(plan_experiment(config(R"({"name":"error_tracking","base":{"frame":{"fs_hz":6e9}}})")), Error);
}

TEST(Config, GridExpansionAndHash) {
  const ExperimentPlan a = plan_experiment(config(R"({"name":"lemma1_coverage","trials":5})"));
  EXPECT_EQ(a.cells.size(), 12u);
  EXPECT_EQ(a.swept, (std::vector<std::string>{"eta", "v"}));
  EXPECT_EQ(a.cells[1]["v"], 40);
  EXPECT_EQ(a.cells[4]["eta"], 0.3);
  const ExperimentPlan b = plan_experiment(config(R"({"name":"lemma1_coverage","trials":6})"));
  EXPECT_NE(a.config_hash, b.config_hash);
  const ExperimentPlan c = plan_experiment(config(R"({"name":"lemma1_coverage","trials":5,"threads":3})"));
  EXPECT_EQ(a.config_hash, c.config_hash);
  // Fixing a grid key in base removes it from the sweep.
  const ExperimentPlan d = plan_experiment(config(R"({"name":"lemma1_coverage","base":{"eta":0.25}})"));
  EXPECT_EQ(d.cells.size(), 4u);
  EXPECT_EQ(d.swept, (std::vector<std::string>{"v"}));
}

TEST(Experiments, RowsCarryAuditColumns) {
  const ResultTable t = run_experiment(
      config(R"({"name":"halting_probability","trials":50,"grid":{"v":[10,20]},"base":{"theta_over_delta":0.6}})"));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.columns.front(), "v");
  EXPECT_EQ(t.number(0, "trials"), 50);
  EXPECT_EQ(std::get<std::string>(t.rows[0][t.column("config_hash")]), t.config_hash);
  EXPECT_NE(std::get<std::string>(t.rows[0][t.column("seed_base")]),
            std::get<std::string>(t.rows[1][t.column("seed_base")]));
}

TEST(Experiments, PhaseTransitionMarksImpossibleCells) {
  const ResultTable t = run_experiment(config(R"({"name":"phase_transition","trials":5,"grid":{"M":[20],"k":[0,30]}})"));
  EXPECT_EQ(t.number(0, "success_rate"), 1.0);
  EXPECT_TRUE(std::isnan(t.number(1, "success_rate")));
}

TEST(Experiments, DeterministicAcrossThreads) {
  for (const char* text : {R"({"name":"lemma1_coverage","trials":20,"grid":{"eta":[0.2],"v":[20,40]}})",
                           R"({"name":"single_frame","trials":3})"}) {
    ExperimentConfig cfg = config(text);
    cfg.threads = 1;
    const std::string one = to_csv(run_experiment(cfg));
    cfg.threads = 3;
    EXPECT_EQ(one, to_csv(run_experiment(cfg)));
  }
}

TEST(Experiments, SeedChangesOutput) {
  ExperimentConfig cfg = config(R"({"name":"lemma1_coverage","trials":20,"grid":{"eta":[0.2],"v":[20]}})");
  const std::string a = to_csv(run_experiment(cfg));
  cfg.master_seed = 2;
  EXPECT_NE(a, to_csv(run_experiment(cfg)));
}

TEST(FrameRequest, ParsesExplicitSpec) {
  const auto req = parse_frame_request(nlohmann::json::parse(R"({
    "seed": 4,
    "spec": {"W_hz": 2.5e9, "nyquist_hz": 5e9, "alpha_s": 0.0,
             "subbands": [{"E": 10.0, "B_hz": 20e6, "fc_hz": 500.3e6}]}
  })"));
  EXPECT_EQ(req.seed, 4u);
  ASSERT_TRUE(req.spec.has_value());
  EXPECT_EQ(req.signal().subbands.size(), 1u);
  EXPECT_THROW(parse_frame_request(nlohmann::json::parse(R"({"seeds": 1})")), Error);
}

TEST(WriteAtomic, ReplacesFile) {
  const auto dir = std::filesystem::temp_directory_path() / "acss_write_atomic";
  const std::string path = (dir / "out.csv").string();
  write_atomic(path, "one\n");
  write_atomic(path, "two\n");
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(ss.str(), "two\n");
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  std::filesystem::remove_all(dir);
}
