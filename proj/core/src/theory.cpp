#include "fedsim/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "fedsim/error.hpp"

namespace fedsim {

const char* to_string(Theorem t) {
  switch (t) {
    case Theorem::kT1: return "t1";
    case Theorem::kT2: return "t2";
    case Theorem::kT4: return "t4";
    case Theorem::kT5: return "t5";
  }
  return "?";
}

namespace {

void require_params(const TheoryParams& p) {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!(p.L > 0.0) || !std::isfinite(p.L)) throw Error(ErrorCode::kOutOfRange, "L must be positive");
  if (!finite_nonneg(p.beta)) throw Error(ErrorCode::kOutOfRange, "beta must be >= 0");
  if (!finite_nonneg(p.sigma_sq)) throw Error(ErrorCode::kOutOfRange, "sigma^2 must be >= 0");
  if (!finite_nonneg(p.eta)) throw Error(ErrorCode::kOutOfRange, "eta must be >= 0");
  if (!finite_nonneg(p.F0_minus_Finf)) {
    throw Error(ErrorCode::kOutOfRange, "F(theta_0) - F_inf must be >= 0");
  }
  if (p.m == 0) throw Error(ErrorCode::kOutOfRange, "m must be >= 1");
  if (p.tau == 0) throw Error(ErrorCode::kOutOfRange, "tau must be >= 1");
}

// Shared first two terms plus the step-size guard.
BoundReport base_report(const TheoryParams& p, bool guard) {
  require_params(p);
  if (!(p.eta > 0.0)) throw Error(ErrorCode::kOutOfRange, "bounds need eta > 0");
  BoundReport r;
  const auto [ok, lhs] = lr_feasible(p);
  r.feasible = ok;
  r.lhs = lhs;
  if (!ok && guard) {
    throw InfeasibleStepError(lhs, "step-size condition violated: lhs = " + std::to_string(lhs) +
                                       " > 0");
  }
  if (p.K < p.tau) throw Error(ErrorCode::kOutOfRange, "K must be at least tau");
  r.K_used = (p.K / p.tau) * p.tau;
  if (r.K_used != p.K) {
    r.warnings.push_back("K rounded down from " + std::to_string(p.K) + " to " +
                         std::to_string(r.K_used) + " (multiple of tau)");
  }
  r.term_init = 2.0 * p.F0_minus_Finf / (p.eta * static_cast<double>(r.K_used));
  r.term_noise = p.eta * p.L * p.sigma_sq / static_cast<double>(p.m);
  return r;
}

void finish(BoundReport& r) { r.total = r.term_init + r.term_noise + r.term_local; }

double eta_l_sigma_sq(const TheoryParams& p) {
  const double el = p.eta * p.L;
  return el * el * p.sigma_sq;
}

}  // namespace

std::pair<bool, double> lr_feasible(const TheoryParams& p) {
  require_params(p);
  const double el = p.eta * p.L;
  const double tau = static_cast<double>(p.tau);
  const double lhs = el * (p.beta / static_cast<double>(p.m) + 1.0) - 1.0 +
                     el * el * tau * (2.0 * p.beta + tau + 1.0);
  return {lhs <= 0.0, lhs};
}

std::pair<double, double> uniform_nu_omega(std::size_t tau) {
  const double t = static_cast<double>(tau);
  return {(1.0 + t) / 2.0, (t - 1.0) * (t - 1.0) / 12.0};
}

static BoundReport bound_t1_impl(const TheoryParams& p, bool guard) {
  BoundReport r = base_report(p, guard);
  r.term_local = eta_l_sigma_sq(p) * (static_cast<double>(p.tau) + 1.0);
  finish(r);
  return r;
}

static BoundReport bound_t2_impl(const TheoryParams& p, bool guard) {
  BoundReport r = base_report(p, guard);
  const double tau = static_cast<double>(p.tau);
  if (!(p.nu >= 1.0 && p.nu <= tau)) throw Error(ErrorCode::kOutOfRange, "nu must lie in [1, tau]");
  if (!(p.omega_sq >= 0.0) || !std::isfinite(p.omega_sq)) {
    throw Error(ErrorCode::kOutOfRange, "omega^2 must be >= 0");
  }
  const double bracket = p.nu * (2.0 * tau + 1.0 - p.nu) - p.omega_sq;
  if (bracket < 0.0) {
    throw Error(ErrorCode::kOutOfRange, "omega^2 too large for nu: local term would be negative");
  }
  // bracket / tau first: at nu = tau, omega = 0 this is exactly tau + 1.
  r.term_local = eta_l_sigma_sq(p) * (bracket / tau);
  finish(r);
  return r;
}

double decay_bracket(std::size_t tau, double lambda) {
  if (tau == 0) throw Error(ErrorCode::kOutOfRange, "tau must be >= 1");
  double s = 0.0;
  for (std::size_t j = 1; j <= tau; ++j) {
    const double jj = static_cast<double>(j);
    s = s * lambda + jj * jj;
  }
  return s / static_cast<double>(tau);
}

static BoundReport bound_t4_impl(const TheoryParams& p, bool guard) {
  if (!(p.decay_lambda > 0.0 && p.decay_lambda < 1.0)) {
    throw Error(ErrorCode::kOutOfRange,
                "decay lambda must lie in (0, 1); use bound_t2 with uniform nu, omega^2 at lambda = 1");
  }
  BoundReport r = base_report(p, guard);
  r.term_local = 2.0 * eta_l_sigma_sq(p) / static_cast<double>(p.tau) *
                 decay_bracket(p.tau, p.decay_lambda);
  finish(r);
  return r;
}

static BoundReport bound_t5_impl(const TheoryParams& p, bool guard) {
  const double em = p.eps * p.mu2;
  if (!(em > 0.0 && em < 1.0)) throw Error(ErrorCode::kOutOfRange, "eps * mu2 must lie in (0, 1)");
  BoundReport r = base_report(p, guard);
  const double factor = std::pow(std::fma(-p.eps, p.mu2, 1.0), 2.0 * static_cast<double>(p.rounds));
  r.connectivity_factor = factor;
  if (p.mu_max) {
    const double rho = std::max(std::abs(1.0 - em), std::abs(1.0 - p.eps * *p.mu_max));
    r.spectral_factor = std::pow(rho, 2.0 * static_cast<double>(p.rounds));
  }
  r.term_local = eta_l_sigma_sq(p) * (static_cast<double>(p.tau) + 1.0) * factor;
  finish(r);
  return r;
}

BoundReport bound_t1(const TheoryParams& p) { return bound_t1_impl(p, true); }
BoundReport bound_t2(const TheoryParams& p) { return bound_t2_impl(p, true); }
BoundReport bound_t4(const TheoryParams& p) { return bound_t4_impl(p, true); }
BoundReport bound_t5(const TheoryParams& p) { return bound_t5_impl(p, true); }

BoundReport evaluate_bound(Theorem t, const TheoryParams& p, bool require_feasible) {
  switch (t) {
    case Theorem::kT1: return bound_t1_impl(p, require_feasible);
    case Theorem::kT2: return bound_t2_impl(p, require_feasible);
    case Theorem::kT4: return bound_t4_impl(p, require_feasible);
    case Theorem::kT5: return bound_t5_impl(p, require_feasible);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown theorem");
}

bool check_t3_ordering(const TheoryParams& p) {
  TheoryParams uniform = p;
  std::tie(uniform.nu, uniform.omega_sq) = uniform_nu_omega(p.tau);
  return bound_t4(p).total <= bound_t2(uniform).total;
}

}  // namespace fedsim
