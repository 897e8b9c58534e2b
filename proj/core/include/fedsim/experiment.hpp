#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedsim/accounting.hpp"
#include "fedsim/config.hpp"
#include "fedsim/error.hpp"
#include "fedsim/theory.hpp"
#include "fedsim/trainer.hpp"

namespace fedsim {

/// Malformed config text; line and column are 1-based.
class ConfigSyntaxError : public ConfigError {
 public:
  ConfigSyntaxError(std::size_t line, std::size_t column, const std::string& what)
      : ConfigError("", "syntax error at line " + std::to_string(line) + ", column " +
                            std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// One sweep dimension: a dotted path into the config document ("run.tau")
/// and its values, each kept as compact JSON text.
struct SweepAxis {
  std::string path;
  std::vector<std::string> values;
};

struct OutputSpec {
  std::string dir = "fedsim_out";
  bool csv = true;
  bool jsonl = true;
};

struct BoundsSpec {
  bool present = false;
  TheoryParams base;
  std::vector<Theorem> theorems{Theorem::kT1};
  /// Paths are TheoryParams field names ("tau", "eta", ...).
  std::vector<SweepAxis> axes;
};

struct ExperimentSpec {
  RunConfig base;
  /// Canonical JSON of `base`; sweeps are applied to this document.
  std::string base_json;
  std::vector<SweepAxis> sweep;
  std::vector<std::uint64_t> seeds{0};
  OutputSpec output;
  CostParams costs;
  BoundsSpec bounds;

  std::size_t grid_points() const;
  std::size_t planned_runs() const { return grid_points() * seeds.size(); }
};

/// Parses and validates a JSON experiment description. Every grid point of
/// the sweep is checked, so invariant violations surface here with the field
/// path of the offending value.
ExperimentSpec parse_config(std::string_view text);
ExperimentSpec load_config(const std::filesystem::path& file);

/// Canonical JSON text of a run config (compact, fixed key order).
std::string run_config_to_json(const RunConfig& config);
/// Parses the "run" section; `prefix` is used in error paths.
RunConfig run_config_from_json(std::string_view text, const std::string& prefix = "run");

/// Replaces the method in the base config and re-validates every grid point.
void override_method(ExperimentSpec& spec, Method method);
void override_seeds(ExperimentSpec& spec, std::vector<std::uint64_t> seeds);

struct PlannedRun {
  std::size_t index = 0;
  std::size_t grid_point = 0;
  std::uint64_t seed = 0;
  /// (path, value) pairs of this grid point, in axis order.
  std::vector<std::pair<std::string, std::string>> assignment;
  RunConfig config;
  std::string config_json;
};

/// Grid points in row-major order (first axis slowest), seeds innermost.
std::vector<PlannedRun> plan_runs(const ExperimentSpec& spec);

struct BoundEntry {
  Theorem theorem = Theorem::kT1;
  bool ok = false;
  std::string error;
  BoundReport report;
};

struct RunSummary {
  std::size_t index = 0;
  std::size_t grid_point = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> assignment;
  bool ok = false;
  std::string error;
  std::optional<std::size_t> last_finite_k;
  double metric = 0.0;
  double final_grad_norm_sq = 0.0;
  std::size_t iterations = 0;
  std::size_t periods = 0;
  std::size_t skipped_periods = 0;
  double nu_hat = 0.0;
  double omega_sq_hat = 0.0;
  CostReport cost_counted;
  CostReport cost_analytic;
  double psi2 = 0.0;
  double utility_empirical = 0.0;
  /// Bound of the run's own method used as psi1 in the analytic utility.
  std::optional<Theorem> analytic_theorem;
  std::optional<double> utility_analytic;
  std::vector<BoundEntry> bounds;
  std::string config_json;
};

/// Simulates one planned run and derives bounds, costs and utilities.
/// Library errors are captured in the summary instead of propagating.
RunSummary execute_run(const PlannedRun& run, const CostParams& costs,
                       RunRecord* record_out = nullptr);

/// Theory parameters matching a finished run; nullopt when the objective has
/// no smoothness constant or lower bound.
std::optional<TheoryParams> theory_params_for(const RunConfig& config, const Objective& obj,
                                              const RunRecord& record);

std::string summary_to_json(const RunSummary& summary);
RunSummary summary_from_json(std::string_view line);

/// Frozen per-run time-series header.
inline constexpr std::string_view kRunCsvHeader =
    "k,grad_norm_sq,participants,cum_comm,cum_comp,cum_inter_comm,cum_inter_comp";
std::string record_to_csv(const RunRecord& record);

inline constexpr std::string_view kAggregateCsvPrefix = "grid_point";

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

struct ExperimentOptions {
  std::size_t jobs = 1;
};

struct ExperimentResult {
  std::vector<RunSummary> summaries;
  std::size_t failures = 0;
};

/// Runs every planned run on a pool of `jobs` workers and writes
/// <dir>/runs/run_NNNN.csv, <dir>/summary.jsonl and <dir>/aggregate.csv.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options);

std::string aggregate_csv(const ExperimentSpec& spec, const std::vector<RunSummary>& summaries);

/// Bound grid CSV: theorem, parameters, three terms, total, feasible, note.
std::string bounds_grid_csv(const BoundsSpec& bounds);

struct ValidationCheck {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
};

/// Lemma validators at the base config's initial parameters and, for
/// consensus configs, gossip mean preservation and contraction on its graph.
std::vector<ValidationCheck> run_validators(const ExperimentSpec& spec, std::size_t draws = 20000);

/// 0 success, 1 config error, 2 one or more run failures.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRunFailure = 2 };

}  // namespace fedsim
