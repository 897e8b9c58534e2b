#include "fedsim/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedsim/consensus.hpp"
#include "fedsim/error.hpp"

namespace fedsim {

namespace {

constexpr double kProbabilityTolerance = 1e-12;

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

std::size_t sample_categorical(const std::vector<double>& probs, RngStream& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  // Round-off can leave the total a hair below 1; fall back to the last
  // outcome with positive mass.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

void require_distribution(const std::vector<double>& p, const std::string& what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, what + " has a negative or non-finite entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    throw Error(ErrorCode::kInvalidArgument, what + " does not sum to 1");
  }
}

/// Solves A x = b for symmetric positive definite A by Cholesky; nullopt if
/// the factorisation meets a non-positive pivot.
std::optional<std::vector<double>> cholesky_solve(const std::vector<double>& a,
                                                  const std::vector<double>& b, std::size_t n) {
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= l[j * n + k] * l[j * n + k];
    if (!(diag > 0.0)) return std::nullopt;
    l[j * n + j] = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = v / l[j * n + j];
    }
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= l[i * n + k] * y[k];
    y[i] = v / l[i * n + i];
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double v = y[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= l[k * n + i] * x[k];
    x[i] = v / l[i * n + i];
  }
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// MdpEnv

MdpEnv::MdpEnv(MdpSpec spec) : spec_(std::move(spec)) {
  const std::size_t s_count = spec_.n_states;
  const std::size_t a_count = spec_.n_actions;
  if (s_count == 0 || s_count > kMaxStates) {
    throw Error(ErrorCode::kOutOfRange, "MDP needs 1..32 states");
  }
  if (a_count == 0 || a_count > kMaxActions) {
    throw Error(ErrorCode::kOutOfRange, "MDP needs 1..8 actions");
  }
  if (spec_.horizon == 0) throw Error(ErrorCode::kOutOfRange, "MDP horizon must be positive");
  if (spec_.transitions.size() != s_count * a_count * s_count) {
    throw Error(ErrorCode::kLengthMismatch, "MDP transition tensor must hold |S||A||S| entries");
  }
  if (spec_.rewards.size() != s_count * a_count) {
    throw Error(ErrorCode::kLengthMismatch, "MDP reward table must hold |S||A| entries");
  }
  for (double r : spec_.rewards)
    if (!std::isfinite(r)) throw Error(ErrorCode::kNonFinite, "MDP reward is not finite");
  if (spec_.initial.empty()) {
    spec_.initial.assign(s_count, 1.0 / static_cast<double>(s_count));
  }
  if (spec_.initial.size() != s_count) {
    throw Error(ErrorCode::kLengthMismatch, "MDP initial distribution must hold |S| entries");
  }
  require_distribution(spec_.initial, "MDP initial distribution");
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t a = 0; a < a_count; ++a) {
      const auto first = spec_.transitions.begin() + static_cast<std::ptrdiff_t>((s * a_count + a) * s_count);
      require_distribution(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(s_count)),
                           "MDP transition row (" + std::to_string(s) + "," + std::to_string(a) + ")");
    }
  }
}

double MdpEnv::transition(std::size_t s, std::size_t a, std::size_t s_next) const {
  return spec_.transitions[(s * n_actions() + a) * n_states() + s_next];
}

std::vector<double> MdpEnv::policy(const ParamVector& theta, std::size_t s) const {
  if (theta.size() != dim()) throw Error(ErrorCode::kLengthMismatch, "policy parameter length");
  if (s >= n_states()) throw Error(ErrorCode::kOutOfRange, "state id out of range");
  const std::size_t base = s * n_actions();
  double max_logit = theta[base];
  for (std::size_t a = 1; a < n_actions(); ++a) max_logit = std::max(max_logit, theta[base + a]);
  std::vector<double> probs(n_actions());
  double total = 0.0;
  for (std::size_t a = 0; a < n_actions(); ++a) {
    probs[a] = std::exp(theta[base + a] - max_logit);
    total += probs[a];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::vector<double> MdpEnv::visitation(const ParamVector& theta) const {
  require_finite(theta, "policy parameters");
  const std::size_t s_count = n_states();
  std::vector<std::vector<double>> pi(s_count);
  for (std::size_t s = 0; s < s_count; ++s) pi[s] = policy(theta, s);

  std::vector<double> current = spec_.initial;
  std::vector<double> average(s_count, 0.0);
  std::vector<double> next(s_count);
  for (std::size_t t = 0; t < horizon(); ++t) {
    for (std::size_t s = 0; s < s_count; ++s) average[s] += current[s];
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < s_count; ++s) {
      if (current[s] == 0.0) continue;
      for (std::size_t a = 0; a < n_actions(); ++a) {
        const double mass = current[s] * pi[s][a];
        for (std::size_t s2 = 0; s2 < s_count; ++s2) next[s2] += mass * transition(s, a, s2);
      }
    }
    current.swap(next);
  }
  for (double& v : average) v /= static_cast<double>(horizon());
  return average;
}

double MdpEnv::expected_reward(const ParamVector& theta) const {
  const auto d = visitation(theta);
  double total = 0.0;
  for (std::size_t s = 0; s < n_states(); ++s) {
    const auto pi = policy(theta, s);
    for (std::size_t a = 0; a < n_actions(); ++a) total += d[s] * pi[a] * reward(s, a);
  }
  return total;
}

ParamVector MdpEnv::expected_reward_gradient(const ParamVector& theta) const {
  const auto d = visitation(theta);
  ParamVector grad(dim());
  for (std::size_t s = 0; s < n_states(); ++s) {
    const auto pi = policy(theta, s);
    double mean_reward = 0.0;
    for (std::size_t a = 0; a < n_actions(); ++a) mean_reward += pi[a] * reward(s, a);
    // sum_a pi(a) r(a) (e_a - pi) = pi .* (r - mean_reward)
    for (std::size_t a = 0; a < n_actions(); ++a) {
      grad[s * n_actions() + a] = d[s] * pi[a] * (reward(s, a) - mean_reward);
    }
  }
  return grad;
}

ParamVector MdpEnv::transition_loss_gradient(const ParamVector& theta, const Transition& tr) const {
  if (tr.state >= n_states() || tr.next_state >= n_states() || tr.action >= n_actions()) {
    throw Error(ErrorCode::kOutOfRange, "transition references an unknown state or action");
  }
  ParamVector grad(dim());
  const auto pi = policy(theta, tr.state);
  const std::size_t base = tr.state * n_actions();
  for (std::size_t b = 0; b < n_actions(); ++b) {
    const double score = (b == tr.action ? 1.0 : 0.0) - pi[b];
    grad[base + b] = -tr.reward * score;
  }
  return grad;
}

Minibatch rollout_minibatch(const MdpEnv& env, const ParamVector& theta, std::size_t batch_len,
                            RngStream& rng) {
  if (batch_len == 0) throw Error(ErrorCode::kOutOfRange, "mini-batch needs at least one transition");
  require_finite(theta, "policy parameters");
  std::vector<std::vector<double>> pi(env.n_states());
  for (std::size_t s = 0; s < env.n_states(); ++s) pi[s] = env.policy(theta, s);

  std::vector<double> row(env.n_states());
  auto step = [&](std::size_t s, std::size_t a) {
    for (std::size_t s2 = 0; s2 < env.n_states(); ++s2) row[s2] = env.transition(s, a, s2);
    return sample_categorical(row, rng);
  };

  std::size_t time = rng.below(env.horizon());
  std::size_t state = sample_categorical(env.initial(), rng);
  for (std::size_t t = 0; t < time; ++t) state = step(state, sample_categorical(pi[state], rng));

  Minibatch batch;
  batch.transitions.reserve(batch_len);
  batch.gradient = ParamVector(env.dim());
  for (std::size_t j = 0; j < batch_len; ++j) {
    Transition tr;
    tr.state = state;
    tr.action = sample_categorical(pi[state], rng);
    tr.reward = env.reward(tr.state, tr.action);
    tr.next_state = step(tr.state, tr.action);
    batch.transitions.push_back(tr);

    const std::size_t base = tr.state * env.n_actions();
    for (std::size_t b = 0; b < env.n_actions(); ++b) {
      const double score = (b == tr.action ? 1.0 : 0.0) - pi[tr.state][b];
      batch.gradient[base + b] += -tr.reward * score;
    }

    if (++time == env.horizon()) {
      time = 0;
      state = sample_categorical(env.initial(), rng);
    } else {
      state = tr.next_state;
    }
  }
  batch.gradient.scale_inplace(1.0 / static_cast<double>(batch_len));
  return batch;
}

// ---------------------------------------------------------------------------
// Objective

Objective Objective::quadratic(std::vector<double> matrix, std::vector<double> offset,
                               NoiseModel noise) {
  const std::size_t d = offset.size();
  if (d == 0) throw Error(ErrorCode::kInvalidArgument, "quadratic objective needs dim >= 1");
  if (matrix.size() != d * d) {
    throw Error(ErrorCode::kLengthMismatch, "quadratic curvature must be dim x dim");
  }
  const auto eigenvalues = symmetric_eigenvalues(matrix, d);
  const double scale = std::max(1.0, std::abs(eigenvalues.back()));
  if (eigenvalues.front() < -1e-12 * scale) {
    throw Error(ErrorCode::kInvalidArgument, "quadratic curvature must be positive semi-definite");
  }
  for (double v : offset)
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "quadratic offset is not finite");

  std::optional<double> infimum;
  if (auto x = cholesky_solve(matrix, offset, d)) {
    double bx = 0.0;
    for (std::size_t i = 0; i < d; ++i) bx += offset[i] * (*x)[i];
    infimum = -0.5 * bx;
  } else if (std::all_of(offset.begin(), offset.end(), [](double v) { return v == 0.0; })) {
    infimum = 0.0;
  }

  Objective obj(QuadraticData{std::move(matrix), std::move(offset)}, d, noise);
  obj.smoothness_ = std::max(0.0, eigenvalues.back());
  obj.lower_bound_ = infimum;
  return obj;
}

Objective Objective::sum_of_sigmoids(std::vector<SigmoidComponent> components, NoiseModel noise) {
  if (components.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "sum of sigmoids needs at least one component");
  }
  const std::size_t d = components.front().direction.size();
  if (d == 0) throw Error(ErrorCode::kInvalidArgument, "sigmoid direction must be non-empty");
  double lipschitz = 0.0;
  double lower = 0.0;
  for (auto& c : components) {
    if (c.center.empty()) c.center.assign(d, 0.0);
    if (c.direction.size() != d || c.center.size() != d) {
      throw Error(ErrorCode::kLengthMismatch, "sigmoid components must share one dimension");
    }
    double norm_sq = 0.0;
    for (double v : c.direction) norm_sq += v * v;
    lipschitz += std::abs(c.weight) * norm_sq / 4.0;
    lower -= std::max(c.weight, 0.0);
  }
  Objective obj(SigmoidData{std::move(components)}, d, noise);
  obj.smoothness_ = lipschitz;
  obj.lower_bound_ = lower;
  return obj;
}

Objective Objective::policy_mdp(MdpEnv env) {
  const std::size_t d = env.dim();
  return Objective(std::move(env), d, NoiseModel{});
}

ObjectiveKind Objective::kind() const noexcept {
  switch (data_.index()) {
    case 0: return ObjectiveKind::kQuadratic;
    case 1: return ObjectiveKind::kSumOfSigmoids;
    default: return ObjectiveKind::kPolicyGradientMdp;
  }
}

void Objective::require_dim(const ParamVector& theta) const {
  if (theta.size() != dim_) {
    throw Error(ErrorCode::kLengthMismatch, "theta has length " + std::to_string(theta.size()) +
                                                ", objective expects " + std::to_string(dim_));
  }
  require_finite(theta, "theta");
}

double Objective::value(const ParamVector& theta) const {
  require_dim(theta);
  if (const auto* q = std::get_if<QuadraticData>(&data_)) {
    double quad = 0.0;
    double lin = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) row += q->matrix[i * dim_ + j] * theta[j];
      quad += theta[i] * row;
      lin += q->offset[i] * theta[i];
    }
    return 0.5 * quad - lin;
  }
  if (const auto* sig = std::get_if<SigmoidData>(&data_)) {
    double total = 0.0;
    for (const auto& c : sig->components) {
      double u = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) u += c.direction[i] * (theta[i] - c.center[i]);
      total -= c.weight * sigmoid(u);
    }
    return total;
  }
  return -std::get<MdpEnv>(data_).expected_reward(theta);
}

ParamVector Objective::full_gradient(const ParamVector& theta) const {
  require_dim(theta);
  ParamVector grad(dim_);
  if (const auto* q = std::get_if<QuadraticData>(&data_)) {
    for (std::size_t i = 0; i < dim_; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) row += q->matrix[i * dim_ + j] * theta[j];
      grad[i] = row - q->offset[i];
    }
  } else if (const auto* sig = std::get_if<SigmoidData>(&data_)) {
    for (const auto& c : sig->components) {
      double u = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) u += c.direction[i] * (theta[i] - c.center[i]);
      const double s = sigmoid(u);
      const double coeff = -c.weight * s * (1.0 - s);
      for (std::size_t i = 0; i < dim_; ++i) grad[i] += coeff * c.direction[i];
    }
  } else {
    grad = std::get<MdpEnv>(data_).expected_reward_gradient(theta);
    grad.scale_inplace(-1.0);
  }
  require_finite(grad, "full gradient");
  return grad;
}

ParamVector Objective::sample_gradient(const ParamVector& theta, RngStream& rng,
                                       std::size_t batch_len) const {
  if (const auto* env = std::get_if<MdpEnv>(&data_)) {
    require_dim(theta);
    return rollout_minibatch(*env, theta, batch_len, rng).gradient;
  }
  ParamVector g = full_gradient(theta);
  const double variance = noise_.beta * vec_norm_sq(g) + noise_.sigma_sq;
  const double scale = std::sqrt(variance / static_cast<double>(dim_));
  for (std::size_t i = 0; i < dim_; ++i) g[i] += scale * rng.normal();
  require_finite(g, "stochastic gradient");
  return g;
}

Objective make_objective(const ObjectiveSpec& spec) {
  if (spec.noise.beta < 0.0 || spec.noise.sigma_sq < 0.0 || !std::isfinite(spec.noise.beta) ||
      !std::isfinite(spec.noise.sigma_sq)) {
    throw Error(ErrorCode::kInvalidArgument, "noise beta and sigma_sq must be non-negative");
  }
  switch (spec.kind) {
    case ObjectiveKind::kQuadratic: {
      std::vector<double> offset = spec.offset.empty() ? std::vector<double>(spec.dim, 0.0) : spec.offset;
      return Objective::quadratic(spec.matrix, std::move(offset), spec.noise);
    }
    case ObjectiveKind::kSumOfSigmoids:
      return Objective::sum_of_sigmoids(spec.components, spec.noise);
    case ObjectiveKind::kPolicyGradientMdp:
      return Objective::policy_mdp(MdpEnv(spec.mdp));
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown objective kind");
}

ParamVector initial_theta(const ObjectiveSpec& spec) {
  if (spec.theta0.empty()) return ParamVector(spec.dim, 0.0);
  return ParamVector(spec.theta0);
}

ParamVector full_gradient(const Objective& obj, const ParamVector& theta) {
  return obj.full_gradient(theta);
}

ParamVector sample_gradient(const Objective& obj, const ParamVector& theta, RngStream& rng) {
  return obj.sample_gradient(theta, rng);
}

}  // namespace fedsim
