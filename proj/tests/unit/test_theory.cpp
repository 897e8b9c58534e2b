#include <gtest/gtest.h>

#include <cmath>

#include "fedsim/error.hpp"
#include "fedsim/theory.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

TheoryParams reference() {
  TheoryParams p;
  p.eta = 0.01;
  p.L = 1.0;
  p.beta = 1.0;
  p.sigma_sq = 1.0;
  p.m = 4;
  p.tau = 5;
  p.F0_minus_Finf = 1.0;
  p.K = 1000;
  return p;
}

double els(const TheoryParams& p) { return p.eta * p.eta * p.L * p.L * p.sigma_sq; }

}  // namespace

TEST(LrFeasible, Examples) {
  const auto [ok, lhs] = lr_feasible(reference());
  EXPECT_TRUE(ok);
  EXPECT_NEAR(lhs, -0.9835, 1e-15);

  TheoryParams zero = reference();
  zero.eta = 0.0;
  EXPECT_EQ(lr_feasible(zero), std::make_pair(true, -1.0));

  TheoryParams big;
  big.eta = 1.0;
  big.L = 1.0;
  big.beta = 0.0;
  big.m = 1;
  big.tau = 1;
  const auto [ok2, lhs2] = lr_feasible(big);
  EXPECT_FALSE(ok2);
  EXPECT_EQ(lhs2, 2.0);
}

TEST(BoundT1, Example) {
  TheoryParams p = reference();
  p.beta = 0.0;
  const BoundReport r = bound_t1(p);
  EXPECT_NEAR(r.term_init, 0.2, 1e-15);
  EXPECT_NEAR(r.term_noise, 0.0025, 1e-16);
  EXPECT_NEAR(r.term_local, 0.0006, 1e-16);
  EXPECT_NEAR(r.total, 0.2031, 1e-15);
  EXPECT_TRUE(r.feasible);
  EXPECT_EQ(r.K_used, 1000u);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_EQ(r.total, r.term_init + r.term_noise + r.term_local);
}

TEST(BoundT1, NoiselessAndMonotoneInTau) {
  TheoryParams p = reference();
  p.sigma_sq = 0.0;
  const BoundReport r = bound_t1(p);
  EXPECT_EQ(r.total, 2.0 / (0.01 * 1000.0));
  EXPECT_EQ(r.term_noise, 0.0);
  EXPECT_EQ(r.term_local, 0.0);

  p = reference();
  p.K = 13860;  // divisible by every tau below
  double prev = -1.0;
  for (std::size_t tau = 1; tau <= 15; ++tau) {
    p.tau = tau;
    const double t = bound_t1(p).total;
    EXPECT_GT(t, prev) << tau;
    prev = t;
  }
}

TEST(BoundT1, InfeasibleRaisesWithLhs) {
  TheoryParams p = reference();
  p.eta = 1.0;
  p.beta = 0.0;
  p.m = 1;
  p.tau = 1;
  try {
    bound_t1(p);
    FAIL();
  } catch (const InfeasibleStepError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
    EXPECT_EQ(e.lhs(), 2.0);
  }
  const BoundReport r = evaluate_bound(Theorem::kT1, p, false);
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.lhs, 2.0);
  EXPECT_THROW(evaluate_bound(Theorem::kT1, p), InfeasibleStepError);
}

TEST(BoundT1, RoundsKDownWithWarning) {
  TheoryParams p = reference();
  p.K = 1003;
  const BoundReport r = bound_t1(p);
  EXPECT_EQ(r.K_used, 1000u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("1003"), std::string::npos);
  EXPECT_EQ(r.term_init, 2.0 / (0.01 * 1000.0));
  p.K = 4;
  EXPECT_THROW(bound_t1(p), Error);
}

TEST(BoundT2, ReducesToT1Exactly) {
  for (std::size_t tau = 1; tau <= 30; ++tau) {
    TheoryParams p = reference();
    p.tau = tau;
    p.K = 30000;
    p.eta = 0.001;
    p.nu = static_cast<double>(tau);
    p.omega_sq = 0.0;
    const BoundReport a = bound_t1(p), b = bound_t2(p);
    EXPECT_EQ(a.term_local, b.term_local) << tau;
    EXPECT_EQ(a.total, b.total) << tau;
  }
}

TEST(BoundT2, UniformTau15Example) {
  TheoryParams p = reference();
  p.tau = 15;
  p.K = 1500;
  const auto [nu, omega_sq] = uniform_nu_omega(15);
  EXPECT_EQ(nu, 8.0);
  EXPECT_NEAR(omega_sq, 49.0 / 3.0, 1e-15);
  p.nu = nu;
  p.omega_sq = omega_sq;
  const double bracket = -64.0 + 248.0 - 49.0 / 3.0;
  EXPECT_NEAR(bracket, 167.66666666666666, 1e-12);
  EXPECT_NEAR(bound_t2(p).term_local, els(p) * bracket / 15.0, 1e-18);
}

TEST(BoundT2, MonotoneInNuAndOmega) {
  TheoryParams p = reference();
  p.tau = 20;
  p.K = 2000;
  p.omega_sq = 3.0;
  double prev = -1.0;
  for (double nu = 1.0; nu <= 20.0; nu += 0.25) {
    p.nu = nu;
    const double t = bound_t2(p).total;
    EXPECT_GE(t, prev) << nu;
    prev = t;
  }
  p.nu = 10.0;
  prev = INFINITY;
  for (double w = 0.0; w <= 100.0; w += 5.0) {
    p.omega_sq = w;
    const double t = bound_t2(p).total;
    EXPECT_LT(t, prev) << w;
    prev = t;
  }
}

TEST(BoundT2, RejectsOutOfRangeInputs) {
  TheoryParams p = reference();
  p.nu = 6.0;
  EXPECT_THROW(bound_t2(p), Error);
  p.nu = 0.5;
  EXPECT_THROW(bound_t2(p), Error);
  p.nu = 3.0;
  p.omega_sq = -1.0;
  EXPECT_THROW(bound_t2(p), Error);
  p.omega_sq = 1000.0;
  EXPECT_THROW(bound_t2(p), Error);
}

TEST(DecayBracket, EndpointsAndDirection) {
  for (std::size_t tau = 1; tau <= 25; ++tau) {
    const double t = static_cast<double>(tau);
    EXPECT_EQ(decay_bracket(tau, 0.0), t);
    EXPECT_NEAR(decay_bracket(tau, 1.0), (t + 1) * (2 * t + 1) / 6.0, 1e-12 * t * t);
    double prev = decay_bracket(tau, 0.0);
    for (int j = 1; j <= 20; ++j) {
      const double b = decay_bracket(tau, 0.05 * j);
      if (tau == 1) {
        EXPECT_EQ(b, 1.0);
      } else {
        EXPECT_GT(b, prev) << tau << " " << j;
      }
      prev = b;
    }
  }
}

TEST(BoundT4, SmallLambdaMatchesT1AtTauOne) {
  for (std::size_t tau = 1; tau <= 20; ++tau) {
    TheoryParams p = reference();
    p.tau = tau;
    p.decay_lambda = 1e-9;
    const double want = 2.0 * els(p);
    EXPECT_LE(std::abs(bound_t4(p).term_local - want), 1e-6 * want) << tau;
  }
}

TEST(BoundT4, LargerLambdaGivesLargerTotal) {
  TheoryParams p = reference();
  p.tau = 10;
  p.decay_lambda = 0.92;
  const double lo = bound_t4(p).total;
  p.decay_lambda = 0.98;
  EXPECT_LT(lo, bound_t4(p).total);
}

TEST(BoundT4, LambdaOneLimit) {
  // At lambda -> 1 the bracket tends to the discrete-uniform value; the
  // continuous omega^2 = (tau - 1)^2 / 12 used by uniform_nu_omega leaves a
  // gap of (tau - 1) / (6 tau) in the bracket.
  for (std::size_t tau = 2; tau <= 20; ++tau) {
    TheoryParams p = reference();
    p.tau = tau;
    p.decay_lambda = 1.0 - 1e-6;
    const double t = static_cast<double>(tau);
    const double t4 = bound_t4(p).term_local;

    TheoryParams u = p;
    u.nu = (1.0 + t) / 2.0;
    u.omega_sq = (t * t - 1.0) / 12.0;
    EXPECT_NEAR(t4, bound_t2(u).term_local, 1e-3 * t4) << tau;

    std::tie(u.nu, u.omega_sq) = uniform_nu_omega(tau);
    const double gap = bound_t2(u).term_local - t4;
    const double want = els(p) * (t - 1.0) / (6.0 * t);
    EXPECT_NEAR(gap, want, 1e-3 * want) << tau;
  }
}

TEST(BoundT4, RejectsLambdaOutsideOpenInterval) {
  TheoryParams p = reference();
  for (double lam : {0.0, 1.0, 1.5, -0.1}) {
    p.decay_lambda = lam;
    EXPECT_THROW(bound_t4(p), Error) << lam;
  }
}

TEST(BoundT5, Examples) {
  TheoryParams p = reference();
  p.eps = 0.2;
  p.mu2 = 1.4384;
  p.rounds = 0;
  EXPECT_EQ(bound_t5(p).total, bound_t1(p).total);
  EXPECT_EQ(*bound_t5(p).connectivity_factor, 1.0);
  p.rounds = 1;
  const BoundReport r = bound_t5(p);
  EXPECT_NEAR(*r.connectivity_factor, 0.71232 * 0.71232, 1e-15);
  EXPECT_NEAR(*r.connectivity_factor, 0.5073997824, 1e-12);
  EXPECT_FALSE(r.spectral_factor.has_value());
  p.mu_max = 3.0;
  const BoundReport s = bound_t5(p);
  ASSERT_TRUE(s.spectral_factor.has_value());
  EXPECT_NEAR(*s.spectral_factor, 0.71232 * 0.71232, 1e-15);
  p.mu_max = 4.5;  // |1 - 0.9| < 0.71232 still
  EXPECT_NEAR(*bound_t5(p).spectral_factor, 0.71232 * 0.71232, 1e-15);
}

TEST(BoundT5, MonotoneInRoundsEpsAndMu2) {
  TheoryParams p = reference();
  p.eps = 0.2;
  p.mu2 = 1.0;
  double prev = INFINITY;
  for (std::size_t e = 0; e <= 10; ++e) {
    p.rounds = e;
    const double t = bound_t5(p).total;
    EXPECT_LT(t, prev);
    prev = t;
  }
  p.rounds = 2;
  prev = INFINITY;
  for (double eps = 0.05; eps < 1.0; eps += 0.05) {
    p.eps = eps;
    const double t = bound_t5(p).total;
    EXPECT_LT(t, prev) << eps;
    prev = t;
  }
  p.eps = 0.2;
  prev = INFINITY;
  for (double mu2 = 0.2; mu2 < 4.9; mu2 += 0.3) {
    p.mu2 = mu2;
    const double t = bound_t5(p).total;
    EXPECT_LT(t, prev) << mu2;
    prev = t;
  }
  p.mu2 = 5.0;
  EXPECT_THROW(bound_t5(p), Error);
  p.mu2 = 0.0;
  EXPECT_THROW(bound_t5(p), Error);
}

TEST(CheckT3, Examples) {
  TheoryParams p = reference();
  p.tau = 10;
  p.decay_lambda = 0.9;
  EXPECT_TRUE(check_t3_ordering(p));

  p.decay_lambda = 0.999999;
  EXPECT_TRUE(check_t3_ordering(p));
  TheoryParams u = p;
  std::tie(u.nu, u.omega_sq) = uniform_nu_omega(10);
  const double t2 = bound_t2(u).total;
  EXPECT_LE(t2 - bound_t4(p).total, 1e-3 * t2);

  for (std::size_t tau = 2; tau <= 20; ++tau) {
    for (int j = 10; j <= 99; ++j) {
      p.tau = tau;
      p.decay_lambda = 0.01 * j;
      EXPECT_TRUE(check_t3_ordering(p)) << tau << " " << p.decay_lambda;
    }
  }
}

TEST(Bounds, TermsNonNegativeAndSum) {
  for (const auto& p : oracle::random_theory_grid(500, 3)) {
    for (Theorem t : {Theorem::kT1, Theorem::kT2, Theorem::kT4, Theorem::kT5}) {
      const BoundReport r = evaluate_bound(t, p, false);
      EXPECT_GE(r.term_init, 0.0);
      EXPECT_GE(r.term_noise, 0.0);
      EXPECT_GE(r.term_local, 0.0);
      EXPECT_EQ(r.total, r.term_init + r.term_noise + r.term_local);
    }
  }
}

TEST(Bounds, AgreeWithHighPrecisionOracle) {
  const auto grid = oracle::random_theory_grid(10000, 20240101);
  double worst = 0.0;
  for (const auto& p : grid) {
    const oracle::Hp lhs = oracle::lr_lhs(p);
    const double e0 = oracle::rel_err(lr_feasible(p).second, lhs);
    const double e1 = oracle::rel_err(evaluate_bound(Theorem::kT1, p, false).total, oracle::t1(p).total);
    const double e2 = oracle::rel_err(evaluate_bound(Theorem::kT2, p, false).total, oracle::t2(p).total);
    const double e4 = oracle::rel_err(evaluate_bound(Theorem::kT4, p, false).total, oracle::t4(p).total);
    const double e5 = oracle::rel_err(evaluate_bound(Theorem::kT5, p, false).total, oracle::t5(p).total);
    const double e4l =
        oracle::rel_err(evaluate_bound(Theorem::kT4, p, false).term_local, oracle::t4(p).term_local);
    for (double e : {e0, e1, e2, e4, e5, e4l}) worst = std::max(worst, e);
  }
  EXPECT_LE(worst, 1e-12);
  std::cout << "worst relative error " << worst << '\n';
}
