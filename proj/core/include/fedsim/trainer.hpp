#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/consensus.hpp"
#include "fedsim/objective.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct AgentState {
  std::size_t id = 0;
  ParamVector theta;
  /// (virtual iteration, weighted gradient) pairs stored since the last averaging.
  std::vector<std::pair<std::size_t, ParamVector>> pending_grads;
  /// Local-update budget of the current period.
  std::size_t tau_i = 0;
  /// Local updates already spent in the current period.
  std::size_t steps_done = 0;
  RngStream rng{0, 0};
};

struct VirtualAgent {
  ParamVector theta_bar;
  std::size_t aggregations = 0;
};

/// D(s) = lambda^((s - t0) / 2) inside each period; lambda = 1 disables decay.
struct DecaySchedule {
  double lambda = 1.0;

  double weight(std::size_t offset_in_period) const;
};

struct RecordRow {
  std::size_t k = 0;
  double grad_norm_sq = 0.0;
  std::size_t participants = 0;
  std::uint64_t cum_comm = 0;
  std::uint64_t cum_comp = 0;
  std::uint64_t cum_inter_comm = 0;
  std::uint64_t cum_inter_comp = 0;
  bool skipped = false;
};

/// Time series of one run: a row for the initial model (k = 0) and one per
/// aggregation of the virtual agent.
struct RunRecord {
  RunConfig config;
  std::vector<RecordRow> rows;
  std::size_t iterations = 0;  // K
  std::size_t periods = 0;
  std::size_t skipped_periods = 0;
  /// Mean and variance of tau_i over all (period, participant) pairs.
  double nu_hat = 0.0;
  double omega_sq_hat = 0.0;
  ParamVector final_theta;
};

/// One local SGD step: draws g at the agent's parameters, applies
/// theta <- theta - eta * weight * g and stores weight * g. `iteration` tags the
/// stored gradient. Throws kBudgetExhausted when the period budget is spent.
void local_sgd_step(AgentState& agent, const Objective& obj, double eta, double weight,
                    std::size_t iteration, std::size_t batch_len = 1);
AgentState local_sgd_step(AgentState agent, const Objective& obj, double eta, double weight);

/// theta_bar <- theta_bar - eta * (1/m) * sum of every stored gradient, then
/// broadcasts theta_bar to all agents and clears their pending state. Agents
/// that stored nothing contribute nothing; the divisor stays m. Throws
/// kNoParticipants when no agent stored a gradient.
void aggregate(VirtualAgent& virtual_agent, std::span<AgentState> agents, double eta,
               std::size_t m);
VirtualAgent aggregate(VirtualAgent virtual_agent, std::vector<AgentState>& agents, double eta);

/// Full config check: validate_basic plus the topology-dependent rules
/// (consensus step size below 1/Delta, topology connected) and objective shape.
void validate_config(const RunConfig& config);

/// Simulates a whole run. `topo` is required for the consensus method and
/// ignored otherwise. Throws DivergenceError when a parameter becomes
/// non-finite.
RunRecord run(const RunConfig& config, const Objective& obj, const Topology* topo = nullptr);

/// Builds objective and topology from the config and runs it.
RunRecord run(const RunConfig& config);

/// Mean of the recorded ||grad F(theta_bar_k)||^2 values.
double expected_gradient_metric(const RunRecord& record);

/// Monte Carlo estimate of a second moment with its standard error.
struct MomentEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double bound = 0.0;  // right-hand side of the inequality being checked
  std::size_t samples = 0;
};

/// Averaged mini-batch gradient variance E||G - H||^2 at `theta` broadcast to
/// m agents, against beta/m^2 sum||grad F||^2 + sigma^2/m.
MomentEstimate validate_averaged_variance(const Objective& obj, const ParamVector& theta,
                                          std::size_t m, std::size_t draws, RngStream& rng);

/// Averaged mini-batch gradient second moment E||G||^2, against
/// (beta/m^2 + 1/m) sum||grad F||^2 + sigma^2/m.
MomentEstimate validate_averaged_second_moment(const Objective& obj, const ParamVector& theta,
                                               std::size_t m, std::size_t draws, RngStream& rng);

}  // namespace fedsim
