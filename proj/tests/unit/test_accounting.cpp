#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fedsim/accounting.hpp"
#include "fedsim/consensus.hpp"
#include "fedsim/error.hpp"
#include "fixtures.hpp"

using namespace fedsim;

namespace {

RunConfig unit_config() {
  RunConfig c;
  c.objective.kind = ObjectiveKind::kQuadratic;
  c.objective.dim = 1;
  c.objective.matrix = {1.0};
  c.objective.offset = {0.0};
  c.objective.theta0 = {1.0};
  return c;
}

const CostParams kUnit{1.0, 1.0, 1.0, 1.0, 1.0};

}  // namespace

TEST(CostAnalytic, UnitCase) {
  const std::vector<std::size_t> taus{1};
  const CostReport r = cost_analytic(unit_config(), taus, CostParams{3.0, 5.0, 0.0, 0.0, 1.0});
  EXPECT_EQ(r.comm, 1.0);
  EXPECT_EQ(r.comp, 1.0);
  EXPECT_EQ(r.inter_comm, 0.0);
  EXPECT_EQ(r.total, 8.0);
}

TEST(CostAnalytic, DoublingTauHalvesComm) {
  RunConfig c = fixtures::seven_agent_config(5);
  c.epoch_len = 2560;  // T / P integral
  const std::vector<std::size_t> taus5(7, 5), taus10(7, 10);
  const CostReport a = cost_analytic(c, taus5, kUnit);
  c.tau = 10;
  const CostReport b = cost_analytic(c, taus10, kUnit);
  EXPECT_EQ(b.comm, a.comm / 2.0);
  EXPECT_EQ(b.comp, a.comp);
}

TEST(CostAnalytic, ConsensusPath3) {
  RunConfig c = unit_config();
  c.n_agents = 3;
  c.participants = 3;
  c.epoch_len = 10;
  c.method = Method::kConsensus;
  c.consensus_rounds = 2;
  c.topology.kind = TopologyKind::kPath;
  const std::vector<std::size_t> taus(3, 1);
  const CostReport r = cost_analytic(c, taus, CostParams{0.0, 0.0, 1.0, 2.0, 1.0});
  EXPECT_EQ(r.inter_comm, 80.0);
  EXPECT_EQ(r.inter_comp, 80.0);
  EXPECT_EQ(r.total, 240.0);
  EXPECT_EQ(cost_analytic(c, taus, kUnit, 4).inter_comm, 80.0);
}

TEST(CostAnalytic, Validation) {
  const std::vector<std::size_t> two{1, 1};
  EXPECT_THROW(cost_analytic(unit_config(), two, kUnit), Error);
  EXPECT_THROW(validate_costs(CostParams{-1.0, 1.0, 1.0, 1.0, 1.0}), Error);
  EXPECT_THROW(validate_costs(CostParams{1.0, 1.0, 1.0, 1.0, 0.0}), Error);
  EXPECT_NO_THROW(validate_costs(CostParams{0.0, 0.0, 0.0, 0.0, 0.5}));
}

TEST(CostCounted, SevenAgentPeriodicCounts) {
  struct Row {
    std::size_t tau;
    double comm, comp;
  };
  for (const Row& row : {Row{1, 21000, 21000}, Row{10, 2100, 21000}, Row{15, 1400, 21000}}) {
    const RunRecord rec = run(fixtures::seven_agent_config(row.tau));
    const CostReport r = cost_counted(rec, kUnit);
    EXPECT_EQ(r.comm, row.comm) << row.tau;
    EXPECT_EQ(r.comp, row.comp) << row.tau;
    EXPECT_EQ(r.inter_comm, 0.0);
    EXPECT_EQ(r.total, row.comm + row.comp);
  }
}

TEST(CostCounted, SevenAgentConsensusCounts) {
  EXPECT_EQ(Topology::from_edges(7, fixtures::graph_deg26()).total_degree(), 26u);
  EXPECT_EQ(Topology::from_edges(7, fixtures::graph_deg32()).total_degree(), 32u);
  struct Row {
    fixtures::EdgeList edges;
    std::size_t rounds;
    double inter;
  };
  for (const Row& row : {Row{fixtures::graph_deg26(), 1, 78000}, Row{fixtures::graph_deg32(), 1, 96000},
                         Row{fixtures::graph_deg26(), 2, 156000}}) {
    const RunRecord rec = run(fixtures::seven_agent_consensus(10, row.edges, row.rounds));
    const CostReport r = cost_counted(rec, kUnit);
    EXPECT_EQ(r.inter_comm, row.inter);
    EXPECT_EQ(r.inter_comp, row.inter);
    EXPECT_EQ(r.comm, 2100.0);
    EXPECT_EQ(r.comp, 21000.0);
  }
}

TEST(CostCounted, DelayedRowsComputeAtMostTheFullBudget) {
  RunConfig c = fixtures::seven_agent_config(15);
  c.timing.kind = TimingKind::kUniform;
  c.timing.spread = 0.3;
  c.timing.means = {1.0, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5};
  const CostReport r = cost_counted(run(c), kUnit);
  EXPECT_EQ(r.comm, 1400.0);
  EXPECT_LE(r.comp, 21000.0);
  EXPECT_LT(r.comp, 21000.0);
}

TEST(CostCounted, MatchesAnalyticWhenBatchesDivide) {
  RunConfig c = fixtures::seven_agent_config(10);
  c.epoch_len = 2560;
  c.epochs = 20;
  const std::vector<std::size_t> taus(7, 10);
  const CostReport counted = cost_counted(run(c), kUnit);
  const CostReport analytic = cost_analytic(c, taus, kUnit);
  EXPECT_EQ(counted.comm, analytic.comm);
  EXPECT_EQ(counted.comp, analytic.comp);

  // With T / P fractional the counter rounds the batch count up.
  const RunConfig t2 = fixtures::seven_agent_config(10);
  const CostReport frac = cost_analytic(t2, taus, kUnit);
  EXPECT_NEAR(frac.comm, 7.0 * 1500.0 * 500.0 / (256.0 * 10.0), 1e-9);
  EXPECT_LT(frac.comm, 2100.0);
}

TEST(Utility, Examples) {
  EXPECT_EQ(utility(4.0, 3.0, 3.0, 1.0), 0.0);
  EXPECT_EQ(utility(4.0, 2.0, 10.0, 1.0), 2.0);
  EXPECT_EQ(utility(4.0, 2.0, 10.0, 2.0), 4.0);
  EXPECT_THROW(utility(0.0, 1.0, 2.0, 1.0), Error);
  EXPECT_THROW(utility(-1.0, 1.0, 2.0, 1.0), Error);
}

TEST(Utility, ScalingInvariance) {
  for (double s : {0.5, 2.0, 7.0, 1e3}) {
    for (double psi : {0.3, 4.0, 2100.0}) {
      const double base = utility(psi, 1.25, 9.5, 0.75);
      EXPECT_NEAR(utility(psi, 1.25 * s, 9.5 * s, 0.75 / s), base, 1e-14 * std::abs(base));
    }
  }
}

TEST(Psi2, Examples) {
  const Objective q = Objective::quadratic({1, 0, 0, 1}, {0, 0}, {});
  EXPECT_EQ(psi2_estimate(q, ParamVector{2, 0}), 4.0);
  const Objective shifted = Objective::quadratic({2, 0, 0, 3}, {4, -3}, {});
  EXPECT_EQ(psi2_estimate(shifted, ParamVector{2, -1}), 0.0);
}

TEST(Psi2, SigmoidMatchesFiniteDifferences) {
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::kSumOfSigmoids;
  spec.dim = 3;
  spec.components = {{{1.0, -0.5, 0.2}, {0.3, 0.0, 0.0}, 1.0},
                     {{-0.4, 1.0, 0.7}, {0.0, -1.0, 0.5}, 0.8},
                     {{0.0, 0.6, -1.2}, {1.0, 1.0, 0.0}, -0.6}};
  const Objective obj = make_objective(spec);
  RngStream rng(5, streams::kValidation);
  for (int trial = 0; trial < 10; ++trial) {
    ParamVector theta(3);
    for (std::size_t i = 0; i < 3; ++i) theta[i] = 4.0 * rng.uniform() - 2.0;
    double fd = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < 3; ++i) {
      ParamVector up = theta, dn = theta;
      up[i] += h;
      dn[i] -= h;
      const double g = (obj.value(up) - obj.value(dn)) / (2.0 * h);
      fd += g * g;
    }
    const double got = psi2_estimate(obj, theta);
    EXPECT_NEAR(got, fd, 1e-6 * fd) << trial;
  }
}
