// Shared test configurations.
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "fedsim/config.hpp"

namespace fixtures {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

// Seven-agent graphs with total degree 26 (max degree 4) and 32 (max degree 5).
inline EdgeList graph_deg26() {
  return {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {0, 2},
          {1, 3}, {2, 4}, {3, 5}, {4, 6}, {0, 6}, {1, 5}};
}

inline EdgeList graph_deg32() {
  EdgeList e = graph_deg26();
  e.insert(e.end(), {{0, 3}, {2, 5}, {1, 6}});
  return e;
}

// m = 7, T = 1500 transitions per epoch, U = 500 epochs, P = 256 per batch.
inline fedsim::RunConfig seven_agent_config(std::size_t tau) {
  fedsim::RunConfig c;
  c.n_agents = 7;
  c.participants = 7;
  c.tau = tau;
  c.eta = 0.01;
  c.epoch_len = 1500;
  c.epochs = 500;
  c.batch_len = 256;
  c.objective.kind = fedsim::ObjectiveKind::kQuadratic;
  c.objective.dim = 2;
  c.objective.matrix = {1.0, 0.0, 0.0, 0.5};
  c.objective.offset = {0.0, 0.0};
  c.objective.theta0 = {1.0, 1.0};
  c.objective.noise = {0.0, 0.1};
  return c;
}

inline fedsim::RunConfig seven_agent_consensus(std::size_t tau, const EdgeList& edges, std::size_t rounds) {
  fedsim::RunConfig c = seven_agent_config(tau);
  c.method = fedsim::Method::kConsensus;
  c.consensus_rounds = rounds;
  c.consensus_eps = 0.15;
  c.topology.kind = fedsim::TopologyKind::kEdges;
  c.topology.edges = edges;
  return c;
}

}  // namespace fixtures
