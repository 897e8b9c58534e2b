#pragma once

#include <cstddef>
#include <span>

#include "fedsim/config.hpp"
#include "fedsim/objective.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/trainer.hpp"

namespace fedsim {

/// Unit costs: C1 per uplink transmission, C2 per local update, W1 per
/// neighbour message received, W2 per local interaction computation.
struct CostParams {
  double C1 = 1.0;
  double C2 = 1.0;
  double W1 = 1.0;
  double W2 = 1.0;
  double alpha = 1.0;
};

void validate_costs(const CostParams& costs);

/// Event counts in units of C1, C2, W1, W2 and their weighted sum.
struct CostReport {
  double comm = 0.0;
  double comp = 0.0;
  double inter_comm = 0.0;
  double inter_comp = 0.0;
  double total = 0.0;
};

/// Closed form with T U / (tau P) periods per agent. For the consensus method
/// it adds sum_i |Omega_i| E T U / P messages and interaction computations,
/// with the topology built from the config. `tau_list` holds one tau_i per
/// participant.
CostReport cost_analytic(const RunConfig& config, std::span<const std::size_t> tau_list,
                         const CostParams& costs);

/// Same with the total degree sum_i |Omega_i| given explicitly.
CostReport cost_analytic(const RunConfig& config, std::span<const std::size_t> tau_list,
                         const CostParams& costs, std::size_t total_degree);

/// Counts recorded by a run (mini-batches per epoch rounded up).
CostReport cost_counted(const RunRecord& record, const CostParams& costs);

/// alpha (psi2 - psi1) / psi.
double utility(double psi, double psi1, double psi2, double alpha);

/// ||grad F(theta_0)||^2.
double psi2_estimate(const Objective& obj, const ParamVector& theta0);

}  // namespace fedsim
