#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fedsim/experiment.hpp"

using namespace fedsim;
namespace fs = std::filesystem;

namespace {

const char* kQuadRun = R"("run": {
    "n_agents": 3, "tau": 4, "eta": 0.02, "epoch_len": 120,
    "objective": {"kind": "quadratic", "diag": [0.5, 1.0], "noise": {"sigma_sq": 0.5},
                  "theta0": [1, -1]},
    "timing": {"kind": "uniform", "spread": 0.4, "means": [1.0, 1.2, 1.5]}
  })";

std::string quad_config(const std::string& extra) {
  return std::string("{\n  ") + kQuadRun + (extra.empty() ? "" : ",\n  " + extra) + "\n}\n";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fedsim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FEDSIM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST(ParseConfig, MinimalUsesDefaults) {
  const ExperimentSpec s = parse_config(R"({"run": {"method": "pavg"}})");
  EXPECT_EQ(s.base.method, Method::kPeriodicAvg);
  EXPECT_EQ(s.base.n_agents, 1u);
  EXPECT_EQ(s.base.participants, 1u);
  EXPECT_EQ(s.base.tau, 1u);
  EXPECT_EQ(s.base.eta, 0.01);
  EXPECT_EQ(s.base.batch_len, 1u);
  EXPECT_EQ(s.base.objective.kind, ObjectiveKind::kQuadratic);
  EXPECT_EQ(s.seeds, std::vector<std::uint64_t>{0});
  EXPECT_EQ(s.output.dir, "fedsim_out");
  EXPECT_FALSE(s.bounds.present);
  EXPECT_EQ(s.planned_runs(), 1u);
  EXPECT_NO_THROW(validate_config(s.base));
}

TEST(ParseConfig, RejectsConsensusStepAboveInverseMaxDegree) {
  const std::string text = R"({"run": {"n_agents": 4, "method": "consensus", "consensus_eps": 0.5,
    "consensus_rounds": 1, "topology": {"kind": "path"}}})";
  try {
    parse_config(text);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "run.consensus_eps");
    EXPECT_NE(std::string(e.what()).find("eps < 1/Delta"), std::string::npos) << e.what();
  }
}

TEST(ParseConfig, SweepTimesSeedsCount) {
  std::string seeds = "[";
  for (int i = 0; i < 20; ++i) seeds += (i ? "," : "") + std::to_string(100 + i);
  seeds += "]";
  const ExperimentSpec s =
      parse_config(quad_config(R"("sweep": [{"path": "run.tau", "values": [1, 5, 10, 15]}], "seeds": )" + seeds));
  EXPECT_EQ(s.grid_points(), 4u);
  EXPECT_EQ(s.planned_runs(), 80u);
  const auto plan = plan_runs(s);
  ASSERT_EQ(plan.size(), 80u);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    EXPECT_EQ(plan[i].index, i);
    EXPECT_EQ(plan[i].grid_point, i / 20);
    EXPECT_EQ(plan[i].seed, 100 + i % 20);
    EXPECT_EQ(plan[i].config.seed, plan[i].seed);
  }
  EXPECT_EQ(plan[0].config.tau, 1u);
  EXPECT_EQ(plan[79].config.tau, 15u);
  EXPECT_EQ(plan[25].assignment.at(0), std::make_pair(std::string("run.tau"), std::string("5")));
  // The recorded config reproduces the run config.
  EXPECT_EQ(run_config_to_json(run_config_from_json(plan[25].config_json)), plan[25].config_json);
}

TEST(ParseConfig, TwoAxesAreRowMajor) {
  const ExperimentSpec s = parse_config(quad_config(
      R"("sweep": [{"path": "run.tau", "values": [1, 2]}, {"path": "run.eta", "values": [0.01, 0.02, 0.03]}],
  "seeds": [7])"));
  const auto plan = plan_runs(s);
  ASSERT_EQ(plan.size(), 6u);
  EXPECT_EQ(plan[1].config.tau, 1u);
  EXPECT_EQ(plan[1].config.eta, 0.02);
  EXPECT_EQ(plan[3].config.tau, 2u);
  EXPECT_EQ(plan[3].config.eta, 0.01);
}

TEST(ParseConfig, SyntaxErrorReportsLineAndColumn) {
  const std::string text = "{\n  \"run\": {\n    \"tau\": ,\n  }\n}\n";
  try {
    parse_config(text);
    FAIL();
  } catch (const ConfigSyntaxError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.column(), 12u);
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(ParseConfig, SemanticErrorsCarryFieldPaths) {
  auto path_of = [](const std::string& text) -> std::string {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.path();
    }
    return "<accepted>";
  };
  EXPECT_EQ(path_of(R"({"run": {"tua": 3}})"), "run.tua");
  EXPECT_EQ(path_of(R"({"run": {"tau": 0}})"), "run.tau");
  EXPECT_EQ(path_of(R"({"run": {"tau": "five"}})"), "run.tau");
  EXPECT_EQ(path_of(R"({"run": {"n_agents": 2, "participants": 3}})"), "run.participants");
  EXPECT_EQ(path_of(R"({"run": {"method": "fedprox"}})"), "run.method");
  EXPECT_EQ(path_of(R"({"run": {"objective": {"kind": "quadratic", "diag": [1, -1]}}})"), "run.objective");
  EXPECT_EQ(path_of(R"({"run": {}, "sweep": [{"path": "run.tau", "values": [2, 0]}]})"), "run.tau");
  EXPECT_EQ(path_of(R"({"run": {}, "sweep": [{"path": "run.nope", "values": [1]}]})"), "run.nope");
  EXPECT_EQ(path_of(R"({"run": {}, "seeds": [-1]})"), "seeds[0]");
  EXPECT_EQ(path_of(R"({"run": {}, "extra": 1})"), "extra");
}

TEST(Summary, RoundTripsThroughJson) {
  const ExperimentSpec s = parse_config(quad_config(R"("seeds": [3])"));
  const auto plan = plan_runs(s);
  RunRecord rec;
  const RunSummary sum = execute_run(plan[0], s.costs, &rec);
  ASSERT_TRUE(sum.ok) << sum.error;
  EXPECT_EQ(sum.metric, expected_gradient_metric(rec));
  EXPECT_FALSE(sum.bounds.empty());
  const std::string line = summary_to_json(sum);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const RunSummary back = summary_from_json(line);
  EXPECT_EQ(summary_to_json(back), line);
  EXPECT_EQ(back.metric, sum.metric);
  EXPECT_EQ(back.nu_hat, sum.nu_hat);
  EXPECT_EQ(back.omega_sq_hat, sum.omega_sq_hat);
  EXPECT_EQ(back.cost_counted.total, sum.cost_counted.total);
  EXPECT_EQ(back.bounds.size(), sum.bounds.size());
  EXPECT_EQ(back.config_json, sum.config_json);
  EXPECT_EQ(back.utility_analytic, sum.utility_analytic);

  const std::string csv = record_to_csv(rec);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kRunCsvHeader);
}

TEST(Summary, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e17, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(RunExperiment, ReplayIsByteIdenticalAndParallelMatchesSequential) {
  const std::string cfg = quad_config(
      R"("sweep": [{"path": "run.tau", "values": [1, 4]}], "seeds": [1, 2, 3])");
  ExperimentSpec s = parse_config(cfg);
  const fs::path a = scratch("replay_a"), b = scratch("replay_b"), c = scratch("replay_c");
  s.output.dir = a.string();
  const auto ra = run_experiment(s, {1});
  EXPECT_EQ(ra.failures, 0u);
  s.output.dir = b.string();
  run_experiment(s, {1});
  s.output.dir = c.string();
  run_experiment(s, {3});
  const auto ta = tree(a);
  EXPECT_EQ(ta.size(), 6u + 2u);
  EXPECT_EQ(ta, tree(b));
  EXPECT_EQ(ta, tree(c));
  EXPECT_TRUE(ta.count("runs/run_0005.csv"));
  EXPECT_EQ(ta.at("aggregate.csv").rfind("grid_point,run.tau,", 0), 0u);

  // One summary line per run, parseable JSON, in plan order.
  std::istringstream lines(ta.at("summary.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("index").get<std::size_t>(), n++);
  }
  EXPECT_EQ(n, 6u);
}

TEST(RunExperiment, DivergentRunIsRecordedAndOthersContinue) {
  ExperimentSpec s = parse_config(quad_config(
      R"("sweep": [{"path": "run.eta", "values": [0.02, 60.0]}], "seeds": [1])"));
  s.output.dir = scratch("diverge").string();
  const auto r = run_experiment(s, {2});
  EXPECT_EQ(r.failures, 1u);
  ASSERT_EQ(r.summaries.size(), 2u);
  EXPECT_TRUE(r.summaries[0].ok);
  EXPECT_FALSE(r.summaries[1].ok);
  EXPECT_TRUE(r.summaries[1].last_finite_k.has_value());
  EXPECT_FALSE(r.summaries[1].error.empty());
}

TEST(Cli, ExitCodesAndOutputs) {
  const fs::path dir = scratch("cli");
  write(dir / "ok.json", quad_config(R"("seeds": [1, 2])"));
  write(dir / "bad.json", R"({"run": {"tau": 0}})");
  write(dir / "syntax.json", "{\"run\": ");
  write(dir / "diverge.json", quad_config(R"("sweep": [{"path": "run.eta", "values": [60.0]}])"));

  EXPECT_EQ(cli("--config " + (dir / "ok.json").string() + " --out " + (dir / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "summary.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "ok" / "runs" / "run_0001.csv"));
  EXPECT_EQ(cli("--config " + (dir / "bad.json").string()), 1);
  EXPECT_EQ(cli("--config " + (dir / "syntax.json").string()), 1);
  EXPECT_EQ(cli("--config " + (dir / "missing.json").string()), 1);
  EXPECT_EQ(cli("--config " + (dir / "ok.json").string() + " --seeds 1,x"), 1);
  EXPECT_EQ(cli("--config " + (dir / "ok.json").string() + " --method sgd"), 1);
  EXPECT_EQ(cli("--config " + (dir / "diverge.json").string() + " --out " + (dir / "dv").string()), 2);
  EXPECT_EQ(cli("--config " + (dir / "ok.json").string() + " --bounds-only"), 1);

  // Overrides: seeds and method land in the recorded configs.
  EXPECT_EQ(cli("--config " + (dir / "ok.json").string() + " --seeds 9,10,11 --method decay --jobs 2 --out " +
                (dir / "ov").string()),
            0);
  std::istringstream lines(slurp(dir / "ov" / "summary.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 9 + n);
    EXPECT_NE(j.at("config").dump().find("\"decay\""), std::string::npos);
    ++n;
  }
  EXPECT_EQ(n, 3u);
}

TEST(Cli, BoundsOnlyWritesGrid) {
  const fs::path dir = scratch("bounds");
  const std::string cfg = std::string(FEDSIM_CONFIG_DIR) + "/quadratic_tau_sweep.json";
  ASSERT_EQ(cli("--config " + cfg + " --bounds-only --out " + dir.string()), 0);
  const std::string csv = slurp(dir / "bounds.csv");
  EXPECT_EQ(csv.rfind("theorem,L,beta,sigma_sq,m,tau,eta,nu,omega_sq,delta_F,K,mu2,eps,rounds,decay_lambda,"
                      "term_init,term_noise,term_local,total,feasible,note\n",
                      0),
            0u);
  EXPECT_NE(csv.find("t1,1,0,1,4,5,0.01,"), std::string::npos);
  EXPECT_NE(csv.find(",0.2031,1,"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "summary.jsonl"));
}

TEST(Cli, ValidateMode) {
  const fs::path dir = scratch("validate");
  const std::string cfg = std::string(FEDSIM_CONFIG_DIR) + "/consensus_path4.json";
  EXPECT_EQ(cli("--config " + cfg + " --validate --out " + dir.string()), 0);
  const std::string csv = slurp(dir / "validation.csv");
  EXPECT_EQ(csv.rfind("check,value,bound,pass\n", 0), 0u);
  EXPECT_EQ(csv.find(",0\n"), std::string::npos);
}
