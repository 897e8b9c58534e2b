#include "fedsim/config.hpp"

#include <cmath>
#include <string>

#include "fedsim/error.hpp"

namespace fedsim {

const char* to_string(Method m) {
  switch (m) {
    case Method::kPeriodicAvg: return "pavg";
    case Method::kDecay: return "decay";
    case Method::kConsensus: return "consensus";
  }
  return "?";
}

const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kQuadratic: return "quadratic";
    case ObjectiveKind::kSumOfSigmoids: return "sum_of_sigmoids";
    case ObjectiveKind::kPolicyGradientMdp: return "mdp";
  }
  return "?";
}

const char* to_string(TimingKind k) {
  switch (k) {
    case TimingKind::kDeterministic: return "deterministic";
    case TimingKind::kUniform: return "uniform";
    case TimingKind::kShiftedExponential: return "shifted_exponential";
  }
  return "?";
}

const char* to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::kNone: return "none";
    case TopologyKind::kEdges: return "edges";
    case TopologyKind::kPath: return "path";
    case TopologyKind::kRing: return "ring";
    case TopologyKind::kComplete: return "complete";
    case TopologyKind::kRandom: return "random";
  }
  return "?";
}

void validate_basic(const RunConfig& c) {
  auto fail = [](const char* path, const std::string& msg) { throw ConfigError(path, msg); };
  if (c.n_agents == 0) fail("run.n_agents", "must be positive");
  if (c.participants == 0) fail("run.participants", "must be positive");
  if (c.participants > c.n_agents) fail("run.participants", "m must not exceed n_agents (m <= N)");
  if (c.tau == 0) fail("run.tau", "must be >= 1");
  if (!(c.eta > 0.0) || !std::isfinite(c.eta)) fail("run.eta", "must be a positive finite real");
  if (c.epochs == 0) fail("run.epochs", "must be positive");
  if (c.epoch_len == 0) fail("run.epoch_len", "must be positive");
  if (c.batch_len == 0) fail("run.batch_len", "must be positive");
  if (c.batch_len > c.epoch_len) fail("run.batch_len", "batch_len must not exceed epoch_len (P <= T)");
  if (c.method == Method::kDecay && !(c.decay_lambda > 0.0 && c.decay_lambda <= 1.0)) {
    fail("run.decay_lambda", "decay requires 0 < lambda <= 1");
  }
  if (c.method == Method::kConsensus) {
    if (!(c.consensus_eps > 0.0)) fail("run.consensus_eps", "must be positive");
    if (c.topology.kind == TopologyKind::kNone) {
      fail("run.topology", "consensus method requires a topology");
    }
  }
  if (!c.timing.means.empty() && c.timing.means.size() != c.n_agents) {
    fail("run.timing.means", "needs one mean per agent (" + std::to_string(c.n_agents) + ")");
  }
  for (std::size_t i = 0; i < c.timing.means.size(); ++i) {
    if (!(c.timing.means[i] > 0.0) || !std::isfinite(c.timing.means[i])) {
      fail("run.timing.means", "means must be positive and finite");
    }
    if (i > 0 && c.timing.means[i] < c.timing.means[i - 1]) {
      fail("run.timing.means", "means must be sorted non-decreasing (E[x1] <= ... <= E[xN])");
    }
  }
  if (c.timing.kind != TimingKind::kDeterministic &&
      !(c.timing.spread >= 0.0 && c.timing.spread < 1.0)) {
    fail("run.timing.spread", "must lie in [0, 1)");
  }
}

}  // namespace fedsim
