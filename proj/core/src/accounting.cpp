#include "fedsim/accounting.hpp"

#include <cmath>

#include "fedsim/consensus.hpp"
#include "fedsim/error.hpp"

namespace fedsim {

void validate_costs(const CostParams& costs) {
  for (double c : {costs.C1, costs.C2, costs.W1, costs.W2}) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw Error(ErrorCode::kOutOfRange, "unit costs must be finite and non-negative");
    }
  }
  if (!(costs.alpha > 0.0) || !std::isfinite(costs.alpha)) {
    throw Error(ErrorCode::kOutOfRange, "alpha must be positive");
  }
}

namespace {

void weigh(CostReport& r, const CostParams& c) {
  r.total = c.C1 * r.comm + c.C2 * r.comp + c.W1 * r.inter_comm + c.W2 * r.inter_comp;
}

}  // namespace

CostReport cost_analytic(const RunConfig& config, std::span<const std::size_t> tau_list,
                         const CostParams& costs, std::size_t total_degree) {
  validate_costs(costs);
  if (tau_list.size() != config.participants) {
    throw Error(ErrorCode::kLengthMismatch, "tau_list must hold one entry per participant");
  }
  if (config.tau == 0 || config.batch_len == 0) {
    throw Error(ErrorCode::kOutOfRange, "tau and batch length must be positive");
  }
  const double steps = static_cast<double>(config.epoch_len) * static_cast<double>(config.epochs) /
                       static_cast<double>(config.batch_len);
  const double periods = steps / static_cast<double>(config.tau);
  CostReport r;
  for (std::size_t tau_i : tau_list) {
    r.comm += periods;
    r.comp += static_cast<double>(tau_i) * periods;
  }
  if (config.method == Method::kConsensus) {
    const double inter = static_cast<double>(total_degree) *
                         static_cast<double>(config.consensus_rounds) * steps;
    r.inter_comm = inter;
    r.inter_comp = inter;
  }
  weigh(r, costs);
  return r;
}

CostReport cost_analytic(const RunConfig& config, std::span<const std::size_t> tau_list,
                         const CostParams& costs) {
  std::size_t degree = 0;
  if (config.method == Method::kConsensus) {
    degree = make_topology(config.topology, config.participants).total_degree();
  }
  return cost_analytic(config, tau_list, costs, degree);
}

CostReport cost_counted(const RunRecord& record, const CostParams& costs) {
  validate_costs(costs);
  CostReport r;
  if (!record.rows.empty()) {
    const RecordRow& last = record.rows.back();
    r.comm = static_cast<double>(last.cum_comm);
    r.comp = static_cast<double>(last.cum_comp);
    r.inter_comm = static_cast<double>(last.cum_inter_comm);
    r.inter_comp = static_cast<double>(last.cum_inter_comp);
  }
  weigh(r, costs);
  return r;
}

double utility(double psi, double psi1, double psi2, double alpha) {
  if (!(psi > 0.0)) throw Error(ErrorCode::kOutOfRange, "utility needs a positive cost");
  return alpha * (psi2 - psi1) / psi;
}

double psi2_estimate(const Objective& obj, const ParamVector& theta0) {
  return vec_norm_sq(obj.full_gradient(theta0));
}

}  // namespace fedsim
