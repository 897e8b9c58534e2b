#include "fedsim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsim/error.hpp"

namespace fedsim {

TimingModel::TimingModel(TimingKind kind, std::vector<double> means, double spread)
    : kind_(kind), means_(std::move(means)), spread_(spread) {
  if (means_.empty()) throw Error(ErrorCode::kInvalidArgument, "timing model needs at least one agent");
  for (std::size_t i = 0; i < means_.size(); ++i) {
    if (!(means_[i] > 0.0) || !std::isfinite(means_[i])) {
      throw Error(ErrorCode::kInvalidArgument, "mean step time must be positive and finite");
    }
    if (i > 0 && means_[i] < means_[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "mean step times must be sorted non-decreasing");
    }
  }
  if (kind_ != TimingKind::kDeterministic && !(spread_ >= 0.0 && spread_ < 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "timing spread must lie in [0, 1)");
  }
}

TimingModel TimingModel::from_spec(const TimingSpec& spec, std::size_t n_agents) {
  std::vector<double> means = spec.means.empty() ? std::vector<double>(n_agents, 1.0) : spec.means;
  return TimingModel(spec.kind, std::move(means), spec.spread);
}

double TimingModel::draw(std::size_t agent, RngStream& rng) const {
  const double mean = means_.at(agent);
  switch (kind_) {
    case TimingKind::kDeterministic: return mean;
    case TimingKind::kUniform: return mean * (1.0 + spread_ * (2.0 * rng.uniform() - 1.0));
    case TimingKind::kShiftedExponential:
      return mean * (1.0 - spread_) + rng.exponential(mean * spread_);
  }
  return mean;
}

std::size_t PeriodPlan::budget_of(std::size_t agent) const {
  const auto it = std::lower_bound(participants.begin(), participants.end(), agent);
  if (it == participants.end() || *it != agent) return 0;
  return tau_per_agent[static_cast<std::size_t>(it - participants.begin())];
}

std::vector<std::size_t> compute_tau(std::size_t tau, std::span<const double> means) {
  if (means.empty()) throw Error(ErrorCode::kInvalidArgument, "compute_tau needs at least one mean");
  if (tau == 0) throw Error(ErrorCode::kOutOfRange, "tau must be >= 1");
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (!(means[i] > 0.0)) throw Error(ErrorCode::kInvalidArgument, "mean step time must be positive");
    if (i > 0 && means[i] < means[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "mean step times must be sorted non-decreasing");
    }
  }
  std::vector<std::size_t> out;
  out.push_back(tau);
  for (std::size_t i = 1; i < means.size(); ++i) {
    const double ratio = static_cast<double>(tau) * means[0] / means[i];
    // A ratio that is an integer in exact arithmetic can land a few ulps low
    // (e.g. means scaled by 0.1); the tolerance keeps the floor scale-invariant.
    const auto budget = static_cast<std::size_t>(std::floor(ratio * (1.0 + 1e-12)));
    if (budget == 0) break;
    out.push_back(std::min(budget, tau));
  }
  return out;
}

std::pair<double, double> empirical_nu_omega(const PeriodPlan& plan) {
  const auto& t = plan.tau_per_agent;
  if (t.empty()) throw Error(ErrorCode::kNoParticipants, "period has no participants");
  double mean = 0.0;
  for (std::size_t v : t) mean += static_cast<double>(v);
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (std::size_t v : t) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
  var /= static_cast<double>(t.size());
  return {mean, var};
}

PeriodPlan draw_period(const TimingModel& model, std::size_t tau, RngStream& rng) {
  if (tau == 0) throw Error(ErrorCode::kOutOfRange, "tau must be >= 1");
  PeriodPlan plan;
  plan.tau = tau;
  if (model.kind() == TimingKind::kDeterministic) {
    const auto budgets = compute_tau(tau, model.means());
    for (std::size_t i = 0; i < budgets.size(); ++i) {
      plan.participants.push_back(i);
      plan.tau_per_agent.push_back(budgets[i]);
    }
    return plan;
  }

  const std::uint64_t period_key = rng.next_u64();
  RngStream period = rng.substream(period_key);
  RngStream reference = period.substream(0);
  double window = 0.0;
  for (std::size_t s = 0; s < tau; ++s) window += model.draw(0, reference);
  plan.participants.push_back(0);
  plan.tau_per_agent.push_back(tau);

  for (std::size_t i = 1; i < model.size(); ++i) {
    RngStream agent_rng = period.substream(i);
    double elapsed = 0.0;
    std::size_t done = 0;
    while (done < tau) {
      elapsed += model.draw(i, agent_rng);
      if (elapsed > window) break;
      ++done;
    }
    if (done > 0) {
      plan.participants.push_back(i);
      plan.tau_per_agent.push_back(done);
    }
  }
  return plan;
}

}  // namespace fedsim
