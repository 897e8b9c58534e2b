#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// Per-agent wall-clock step-time distributions, fastest agent first.
///
/// Deterministic: every step takes exactly the mean.
/// Uniform: steps are U[mean (1 - spread), mean (1 + spread)].
/// ShiftedExponential: mean (1 - spread) + Exp(mean * spread).
class TimingModel {
 public:
  TimingModel(TimingKind kind, std::vector<double> means, double spread = 0.0);
  static TimingModel from_spec(const TimingSpec& spec, std::size_t n_agents);

  TimingKind kind() const noexcept { return kind_; }
  const std::vector<double>& means() const noexcept { return means_; }
  double spread() const noexcept { return spread_; }
  std::size_t size() const noexcept { return means_.size(); }

  /// One strictly positive step-time draw for agent i.
  double draw(std::size_t agent, RngStream& rng) const;

 private:
  TimingKind kind_;
  std::vector<double> means_;
  double spread_;
};

/// Local-update budgets of one averaging period.
struct PeriodPlan {
  std::size_t tau = 1;
  /// Agents that completed at least one step, ascending.
  std::vector<std::size_t> participants;
  /// tau_i for each entry of `participants`.
  std::vector<std::size_t> tau_per_agent;

  /// Budget of `agent` in this period, 0 when it did not participate.
  std::size_t budget_of(std::size_t agent) const;
};

/// tau_i = floor(tau * E[x_1] / E[x_i]); agents whose budget floors to zero are
/// dropped, and since means are sorted those form a suffix of the input.
std::vector<std::size_t> compute_tau(std::size_t tau, std::span<const double> means);

/// (nu, omega^2): mean and population variance of the participants' tau_i.
std::pair<double, double> empirical_nu_omega(const PeriodPlan& plan);

/// Simulates one period: it lasts until agent 0 finishes `tau` steps and every
/// other agent is credited with the steps it finished inside that window
/// (capped at tau). Each agent draws from its own substream of `rng`; `rng`
/// itself advances by one draw per call.
PeriodPlan draw_period(const TimingModel& model, std::size_t tau, RngStream& rng);

}  // namespace fedsim
