#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/config.hpp"

namespace fedsim {

enum class Theorem { kT1, kT2, kT4, kT5 };

const char* to_string(Theorem t);

struct BoundReport {
  double term_init = 0.0;   // 2 (F(theta_0) - F_inf) / (eta K)
  double term_noise = 0.0;  // eta L sigma^2 / m
  double term_local = 0.0;  // theorem-specific local-drift term
  double total = 0.0;
  bool feasible = false;
  /// Left-hand side of the step-size condition; feasible iff lhs <= 0.
  double lhs = 0.0;
  /// K after rounding down to a multiple of tau.
  std::size_t K_used = 0;
  /// Consensus bound only: (1 - eps mu2)^(2E) and, when mu_max is known,
  /// rho^(2E) with rho = max(|1 - eps mu2|, |1 - eps mu_max|).
  std::optional<double> connectivity_factor;
  std::optional<double> spectral_factor;
  std::vector<std::string> warnings;
};

/// (lhs <= 0, lhs) for
/// lhs = eta L (beta/m + 1) - 1 + 2 eta^2 L^2 tau beta + eta^2 L^2 tau (tau + 1).
std::pair<bool, double> lr_feasible(const TheoryParams& p);

/// Uniform tau_i on {1..tau}: nu = (1 + tau)/2, omega^2 = (tau - 1)^2 / 12.
std::pair<double, double> uniform_nu_omega(std::size_t tau);

/// Periodic averaging: local term eta^2 L^2 sigma^2 (tau + 1).
BoundReport bound_t1(const TheoryParams& p);
/// Variation-aware: local term (eta^2 L^2 sigma^2 / tau) [nu (2 tau + 1 - nu) - omega^2].
BoundReport bound_t2(const TheoryParams& p);
/// Decay lambda^(s/2): local term (2 eta^2 L^2 sigma^2 / tau^2) sum_{j=1}^{tau} j^2 lambda^(tau - j).
BoundReport bound_t4(const TheoryParams& p);
/// Consensus: local term eta^2 L^2 sigma^2 (tau + 1) (1 - eps mu2)^(2E).
BoundReport bound_t5(const TheoryParams& p);

/// Dispatches to the bound of `t`. With require_feasible = false an
/// infeasible step size is reported through `feasible` instead of thrown.
BoundReport evaluate_bound(Theorem t, const TheoryParams& p, bool require_feasible = true);

/// bound_t4(p).total <= bound_t2(p with uniform nu, omega^2).total.
bool check_t3_ordering(const TheoryParams& p);

/// The decay bracket sum_{j=1}^{tau} j^2 lambda^(tau - j) / tau, by Horner's
/// rule over non-negative terms. Equals tau at lambda = 0 and
/// (tau + 1)(2 tau + 1)/6 at lambda = 1.
double decay_bracket(std::size_t tau, double lambda);

}  // namespace fedsim
