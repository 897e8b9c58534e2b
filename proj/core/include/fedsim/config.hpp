#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedsim {

enum class Method { kPeriodicAvg, kDecay, kConsensus };
enum class ObjectiveKind { kQuadratic, kSumOfSigmoids, kPolicyGradientMdp };
enum class TimingKind { kDeterministic, kUniform, kShiftedExponential };
enum class TopologyKind { kNone, kEdges, kPath, kRing, kComplete, kRandom };

const char* to_string(Method m);
const char* to_string(ObjectiveKind k);
const char* to_string(TimingKind k);
const char* to_string(TopologyKind k);

/// Stochastic-gradient noise: E||g - grad F||^2 = beta ||grad F||^2 + sigma_sq.
struct NoiseModel {
  double beta = 0.0;
  double sigma_sq = 0.0;
};

/// One term -weight * sigmoid(direction . (theta - center)).
struct SigmoidComponent {
  std::vector<double> direction;
  std::vector<double> center;
  double weight = 1.0;
};

/// Tabular MDP description. Transition (s, a, s') is stored at
/// ((s * n_actions) + a) * n_states + s'; reward (s, a) at s * n_actions + a.
struct MdpSpec {
  std::size_t n_states = 1;
  std::size_t n_actions = 2;
  std::vector<double> transitions;
  std::vector<double> rewards;
  std::vector<double> initial;  // empty: uniform over states
  std::size_t horizon = 1;
};

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kQuadratic;
  std::size_t dim = 1;
  std::vector<double> matrix;  // Quadratic curvature, row-major dim x dim
  std::vector<double> offset;  // Quadratic b
  std::vector<SigmoidComponent> components;
  MdpSpec mdp;
  NoiseModel noise;
  std::vector<double> theta0;  // empty: all zeros
};

struct TimingSpec {
  TimingKind kind = TimingKind::kDeterministic;
  std::vector<double> means;  // one per agent, non-decreasing; empty: all 1.0
  double spread = 0.0;
};

struct TopologySpec {
  TopologyKind kind = TopologyKind::kNone;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t k_lo = 3;
  std::size_t k_hi = 4;
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::size_t n_agents = 1;
  std::size_t participants = 1;
  std::size_t tau = 1;
  double eta = 0.01;
  std::size_t epochs = 1;
  std::size_t epoch_len = 1;
  std::size_t batch_len = 1;
  Method method = Method::kPeriodicAvg;
  double decay_lambda = 1.0;
  double consensus_eps = 0.1;
  std::size_t consensus_rounds = 0;
  std::uint64_t seed = 0;
  bool freeze_timing = false;
  ObjectiveSpec objective;
  TimingSpec timing;
  TopologySpec topology;

  /// Mini-batches per epoch: one every batch_len transitions plus a trailing
  /// partial batch.
  std::size_t batches_per_epoch() const noexcept {
    return (epoch_len + batch_len - 1) / batch_len;
  }
  /// Total virtual iterations K of the reference agent.
  std::size_t total_iterations() const noexcept { return epochs * batches_per_epoch(); }
};

/// Constants feeding the closed-form bounds.
struct TheoryParams {
  double L = 1.0;
  double beta = 0.0;
  double sigma_sq = 0.0;
  std::size_t m = 1;
  std::size_t tau = 1;
  double eta = 0.01;
  double nu = 1.0;
  double omega_sq = 0.0;
  double F0_minus_Finf = 0.0;
  std::size_t K = 1;
  double mu2 = 1.0;
  /// Largest Laplacian eigenvalue; enables the spectral-safe consensus factor.
  std::optional<double> mu_max;
  double eps = 0.1;
  std::size_t rounds = 0;
  double decay_lambda = 0.5;
};

/// Checks the invariants that do not need a built topology or objective:
/// positivity, m <= N, P <= T, decay range, timing vector shape.
void validate_basic(const RunConfig& config);

}  // namespace fedsim
