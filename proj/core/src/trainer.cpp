#include "fedsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsim/error.hpp"
#include "fedsim/scheduler.hpp"

namespace fedsim {

double DecaySchedule::weight(std::size_t offset_in_period) const {
  return std::pow(lambda, static_cast<double>(offset_in_period) / 2.0);
}

void local_sgd_step(AgentState& agent, const Objective& obj, double eta, double weight,
                    std::size_t iteration, std::size_t batch_len) {
  if (!(weight > 0.0 && weight <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "gradient weight must lie in (0, 1]");
  }
  if (agent.steps_done >= agent.tau_i) {
    throw Error(ErrorCode::kBudgetExhausted,
                "agent " + std::to_string(agent.id) + " has no local-update budget left");
  }
  ParamVector g = obj.sample_gradient(agent.theta, agent.rng, batch_len);
  if (weight != 1.0) g.scale_inplace(weight);
  agent.theta.axpy_inplace(-eta, g);
  agent.pending_grads.emplace_back(iteration, std::move(g));
  ++agent.steps_done;
}

AgentState local_sgd_step(AgentState agent, const Objective& obj, double eta, double weight) {
  local_sgd_step(agent, obj, eta, weight, agent.steps_done, 1);
  return agent;
}

void aggregate(VirtualAgent& virtual_agent, std::span<AgentState> agents, double eta,
               std::size_t m) {
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "participant count m must be positive");
  ParamVector sum(virtual_agent.theta_bar.size());
  std::size_t contributors = 0;
  for (const auto& agent : agents) {
    if (agent.pending_grads.empty()) continue;
    ++contributors;
    for (const auto& [iteration, g] : agent.pending_grads) sum.axpy_inplace(1.0, g);
  }
  if (contributors == 0) {
    throw Error(ErrorCode::kNoParticipants, "no agent transmitted gradients this period");
  }
  virtual_agent.theta_bar.axpy_inplace(-eta / static_cast<double>(m), sum);
  ++virtual_agent.aggregations;
  for (auto& agent : agents) {
    agent.theta = virtual_agent.theta_bar;
    agent.pending_grads.clear();
    agent.steps_done = 0;
  }
}

VirtualAgent aggregate(VirtualAgent virtual_agent, std::vector<AgentState>& agents, double eta) {
  aggregate(virtual_agent, std::span<AgentState>(agents), eta, agents.size());
  return virtual_agent;
}

void validate_config(const RunConfig& config) {
  validate_basic(config);
  const Objective obj = [&] {
    try {
      return make_objective(config.objective);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError("run.objective", e.what());
    }
  }();
  if (!config.objective.theta0.empty() && config.objective.theta0.size() != obj.dim()) {
    throw ConfigError("run.objective.theta0",
                      "length must equal the objective dimension " + std::to_string(obj.dim()));
  }
  if (config.method == Method::kConsensus) {
    Topology topo = [&] {
      try {
        return make_topology(config.topology, config.participants);
      } catch (const Error& e) {
        throw ConfigError("run.topology", e.what());
      }
    }();
    if (!topo.is_connected()) {
      throw ConfigError("run.topology", "agent graph must be connected");
    }
    const double delta = static_cast<double>(topo.max_degree_plus_one());
    if (!(config.consensus_eps < 1.0 / delta)) {
      throw ConfigError("run.consensus_eps",
                        "consensus step size must satisfy eps < 1/Delta (Delta = max degree + 1 = " +
                            std::to_string(topo.max_degree_plus_one()) + ")");
    }
  }
}

namespace {

std::size_t batch_len_at(const RunConfig& c, std::size_t k) {
  const std::size_t per_epoch = c.batches_per_epoch();
  const std::size_t j = k % per_epoch;
  if (j + 1 < per_epoch) return c.batch_len;
  return c.epoch_len - (per_epoch - 1) * c.batch_len;
}

}  // namespace

RunRecord run(const RunConfig& config, const Objective& obj, const Topology* topo) {
  validate_basic(config);
  const std::size_t m = config.participants;
  const bool gossip = config.method == Method::kConsensus && config.consensus_rounds > 0;
  if (config.method == Method::kConsensus) {
    if (topo == nullptr) throw Error(ErrorCode::kInvalidArgument, "consensus run needs a topology");
    if (topo->size() != m) {
      throw Error(ErrorCode::kLengthMismatch, "topology must have one node per participant");
    }
    if (!topo->is_connected()) throw Error(ErrorCode::kDisconnected, "agent graph is disconnected");
    require_gossip_step_size(*topo, config.consensus_eps);
  }

  const ParamVector theta0 = initial_theta(config.objective);
  if (theta0.size() != obj.dim()) {
    throw Error(ErrorCode::kLengthMismatch, "initial parameters do not match the objective dimension");
  }

  RunRecord record;
  record.config = config;
  record.iterations = config.total_iterations();
  const std::size_t total = record.iterations;

  const TimingModel timing = TimingModel::from_spec(config.timing, config.n_agents);
  RngStream timing_rng(config.seed, streams::kTiming);
  const DecaySchedule decay{config.method == Method::kDecay ? config.decay_lambda : 1.0};

  std::vector<AgentState> agents(m);
  for (std::size_t i = 0; i < m; ++i) {
    agents[i].id = i;
    agents[i].theta = theta0;
    agents[i].rng = RngStream(config.seed, streams::agent(streams::kGradientNoise, i));
  }
  VirtualAgent virtual_agent{theta0, 0};

  RecordRow counters;
  std::size_t k = 0;
  auto grad_norm_at_virtual = [&] {
    try {
      return vec_norm_sq(obj.full_gradient(virtual_agent.theta_bar));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      throw DivergenceError(k == 0 ? 0 : k - 1,
                            "gradient at the averaged parameters is not finite at k = " +
                                std::to_string(k));
    }
  };
  record.rows.push_back(RecordRow{0, grad_norm_at_virtual(), 0, 0, 0, 0, 0, false});

  std::optional<PeriodPlan> frozen;
  double tau_sum = 0.0;
  double tau_sq_sum = 0.0;
  std::size_t tau_count = 0;
  std::vector<ParamVector> fresh(gossip ? m : 0, ParamVector(obj.dim()));

  while (k < total) {
    PeriodPlan plan = (config.freeze_timing && frozen) ? *frozen
                                                       : draw_period(timing, config.tau, timing_rng);
    if (config.freeze_timing && !frozen) frozen = plan;
    const std::size_t period_len = std::min(config.tau, total - k);

    for (auto& agent : agents) {
      agent.tau_i = plan.budget_of(agent.id);
      agent.steps_done = 0;
      if (agent.tau_i > 0) {
        const auto t = static_cast<double>(agent.tau_i);
        tau_sum += t;
        tau_sq_sum += t * t;
        ++tau_count;
      }
    }

    for (std::size_t s = 0; s < period_len; ++s, ++k) {
      const std::size_t batch = batch_len_at(config, k);
      try {
        if (gossip) {
          // Agents without a fresh mini-batch enter the interaction with zeros.
          for (std::size_t i = 0; i < m; ++i) {
            if (agents[i].tau_i > s) {
              fresh[i] = obj.sample_gradient(agents[i].theta, agents[i].rng, batch);
              ++agents[i].steps_done;
              ++counters.cum_comp;
            } else {
              fresh[i].fill(0.0);
            }
          }
          auto mixed = gossip_rounds(fresh, *topo, config.consensus_eps, config.consensus_rounds);
          const auto messages =
              static_cast<std::uint64_t>(topo->total_degree() * config.consensus_rounds);
          counters.cum_inter_comm += messages;
          counters.cum_inter_comp += messages;
          for (std::size_t i = 0; i < m; ++i) {
            agents[i].theta.axpy_inplace(-config.eta, mixed[i]);
            agents[i].pending_grads.emplace_back(k, std::move(mixed[i]));
          }
        } else {
          const double w = decay.weight(s);
          for (auto& agent : agents) {
            if (agent.tau_i <= s) continue;
            local_sgd_step(agent, obj, config.eta, w, k, batch);
            ++counters.cum_comp;
          }
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFinite) throw;
        throw DivergenceError(k == 0 ? 0 : k - 1,
                              "local parameters became non-finite at k = " + std::to_string(k) +
                                  ": " + e.what());
      }
    }

    ++record.periods;
    std::size_t uplinks = 0;
    for (const auto& agent : agents)
      if (!agent.pending_grads.empty()) ++uplinks;

    RecordRow row;
    row.k = k;
    row.participants = uplinks;
    if (uplinks == 0) {
      row.skipped = true;
      ++record.skipped_periods;
      for (auto& agent : agents) agent.theta = virtual_agent.theta_bar;
    } else {
      try {
        aggregate(virtual_agent, agents, config.eta, m);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFinite) throw;
        throw DivergenceError(k - 1, "averaged parameters became non-finite at k = " +
                                         std::to_string(k));
      }
      counters.cum_comm += uplinks;
    }
    row.grad_norm_sq = grad_norm_at_virtual();
    row.cum_comm = counters.cum_comm;
    row.cum_comp = counters.cum_comp;
    row.cum_inter_comm = counters.cum_inter_comm;
    row.cum_inter_comp = counters.cum_inter_comp;
    record.rows.push_back(row);
  }

  if (tau_count > 0) {
    const double n = static_cast<double>(tau_count);
    record.nu_hat = tau_sum / n;
    record.omega_sq_hat = std::max(0.0, tau_sq_sum / n - record.nu_hat * record.nu_hat);
  }
  record.final_theta = virtual_agent.theta_bar;
  return record;
}

RunRecord run(const RunConfig& config) {
  validate_config(config);
  const Objective obj = make_objective(config.objective);
  if (config.method == Method::kConsensus) {
    const Topology topo = make_topology(config.topology, config.participants);
    return run(config, obj, &topo);
  }
  return run(config, obj, nullptr);
}

double expected_gradient_metric(const RunRecord& record) {
  if (record.rows.empty()) throw Error(ErrorCode::kInvalidArgument, "run record has no rows");
  double total = 0.0;
  for (const auto& row : record.rows) total += row.grad_norm_sq;
  return total / static_cast<double>(record.rows.size());
}

namespace {

template <typename Statistic>
MomentEstimate estimate_averaged(const Objective& obj, const ParamVector& theta, std::size_t m,
                                 std::size_t draws, RngStream& rng, Statistic statistic) {
  if (m == 0 || draws < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need m >= 1 agents and at least two draws");
  }
  const ParamVector exact = obj.full_gradient(theta);
  std::vector<RngStream> agent_rngs;
  for (std::size_t i = 0; i < m; ++i) agent_rngs.push_back(rng.substream(i));

  ParamVector averaged(theta.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t n = 0; n < draws; ++n) {
    averaged.fill(0.0);
    for (auto& agent_rng : agent_rngs) {
      averaged.axpy_inplace(1.0 / static_cast<double>(m), obj.sample_gradient(theta, agent_rng));
    }
    const double value = statistic(averaged, exact);
    sum += value;
    sum_sq += value * value;
  }
  const double count = static_cast<double>(draws);
  MomentEstimate out;
  out.samples = draws;
  out.mean = sum / count;
  const double var = std::max(0.0, (sum_sq - count * out.mean * out.mean) / (count - 1.0));
  out.std_error = std::sqrt(var / count);
  return out;
}

}  // namespace

MomentEstimate validate_averaged_variance(const Objective& obj, const ParamVector& theta,
                                          std::size_t m, std::size_t draws, RngStream& rng) {
  auto est = estimate_averaged(obj, theta, m, draws, rng, [](const ParamVector& g, const ParamVector& h) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += (g[i] - h[i]) * (g[i] - h[i]);
    return s;
  });
  const double grad_sq = vec_norm_sq(obj.full_gradient(theta));
  const auto md = static_cast<double>(m);
  // Every agent sits at the same theta, so sum_i ||grad F||^2 = m ||grad F||^2.
  est.bound = obj.noise().beta / (md * md) * md * grad_sq + obj.noise().sigma_sq / md;
  return est;
}

MomentEstimate validate_averaged_second_moment(const Objective& obj, const ParamVector& theta,
                                               std::size_t m, std::size_t draws, RngStream& rng) {
  auto est = estimate_averaged(obj, theta, m, draws, rng,
                               [](const ParamVector& g, const ParamVector&) { return vec_norm_sq(g); });
  const double grad_sq = vec_norm_sq(obj.full_gradient(theta));
  const auto md = static_cast<double>(m);
  est.bound = (obj.noise().beta / (md * md) + 1.0 / md) * md * grad_sq + obj.noise().sigma_sq / md;
  return est;
}

}  // namespace fedsim
