#pragma once

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// One sampled transition <s_t, a_t, r_t, s_{t+1}>.
struct Transition {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
};

/// Finite-horizon tabular MDP with a softmax policy, theta in R^{|S||A|}.
///
/// The loss of one transition is -r_t * log pi(s_t, a_t); rewards depend on
/// the (state, action) pair. Episodes start from `initial` and restart after
/// `horizon` steps.
class MdpEnv {
 public:
  static constexpr std::size_t kMaxStates = 32;
  static constexpr std::size_t kMaxActions = 8;

  explicit MdpEnv(MdpSpec spec);

  std::size_t n_states() const noexcept { return spec_.n_states; }
  std::size_t n_actions() const noexcept { return spec_.n_actions; }
  std::size_t horizon() const noexcept { return spec_.horizon; }
  std::size_t dim() const noexcept { return spec_.n_states * spec_.n_actions; }

  double transition(std::size_t s, std::size_t a, std::size_t s_next) const;
  double reward(std::size_t s, std::size_t a) const { return spec_.rewards[s * n_actions() + a]; }
  const std::vector<double>& initial() const noexcept { return spec_.initial; }

  /// pi(. | s) under the tabular softmax parameterisation.
  std::vector<double> policy(const ParamVector& theta, std::size_t s) const;

  /// Average state-visitation distribution over the horizon, by forward
  /// propagation of the state distribution.
  std::vector<double> visitation(const ParamVector& theta) const;

  /// Expected immediate reward per step, sum_s d(s) sum_a pi(a|s) r(s,a).
  double expected_reward(const ParamVector& theta) const;

  /// sum_s d(s) sum_a pi(a|s) r(s,a) grad log pi(a|s), with the visitation
  /// d held at its current value. Negative of the loss gradient.
  ParamVector expected_reward_gradient(const ParamVector& theta) const;

  /// grad of -r * log pi(s, a) for a single transition.
  ParamVector transition_loss_gradient(const ParamVector& theta, const Transition& tr) const;

 private:
  MdpSpec spec_;
};

struct Minibatch {
  std::vector<Transition> transitions;
  ParamVector gradient;
};

/// Samples `batch_len` consecutive on-policy transitions starting at a uniformly
/// drawn episode time, so each transition's state follows the average
/// visitation distribution, and returns their mean loss gradient.
Minibatch rollout_minibatch(const MdpEnv& env, const ParamVector& theta, std::size_t batch_len,
                            RngStream& rng);

/// Differentiable objective F with an exact gradient and a stochastic oracle.
class Objective {
 public:
  /// F(theta) = 0.5 theta^T A theta - b^T theta with A symmetric PSD (row-major).
  static Objective quadratic(std::vector<double> matrix, std::vector<double> offset,
                             NoiseModel noise);
  /// F(theta) = -sum_i w_i sigmoid(c_i . (theta - z_i)).
  static Objective sum_of_sigmoids(std::vector<SigmoidComponent> components, NoiseModel noise);
  static Objective policy_mdp(MdpEnv env);

  ObjectiveKind kind() const noexcept;
  std::size_t dim() const noexcept { return dim_; }
  const NoiseModel& noise() const noexcept { return noise_; }

  double value(const ParamVector& theta) const;
  ParamVector full_gradient(const ParamVector& theta) const;

  /// Unbiased stochastic gradient. Analytic kinds add scaled Gaussian noise;
  /// the MDP kind returns a REINFORCE mini-batch of `batch_len` transitions.
  ParamVector sample_gradient(const ParamVector& theta, RngStream& rng,
                              std::size_t batch_len = 1) const;

  /// Smoothness constant: exact for Quadratic, certified upper bound for
  /// SumOfSigmoids, absent for the MDP.
  std::optional<double> smoothness() const noexcept { return smoothness_; }
  /// Infimum for Quadratic, certified lower bound for SumOfSigmoids, absent
  /// for the MDP.
  std::optional<double> lower_bound() const noexcept { return lower_bound_; }

  const MdpEnv* mdp() const noexcept { return std::get_if<MdpEnv>(&data_); }

 private:
  struct QuadraticData {
    std::vector<double> matrix;
    std::vector<double> offset;
  };
  struct SigmoidData {
    std::vector<SigmoidComponent> components;
  };

  Objective(std::variant<QuadraticData, SigmoidData, MdpEnv> data, std::size_t dim,
            NoiseModel noise)
      : data_(std::move(data)), dim_(dim), noise_(noise) {}

  void require_dim(const ParamVector& theta) const;

  std::variant<QuadraticData, SigmoidData, MdpEnv> data_;
  std::size_t dim_;
  NoiseModel noise_;
  std::optional<double> smoothness_;
  std::optional<double> lower_bound_;
};

Objective make_objective(const ObjectiveSpec& spec);

/// Initial parameters for a run: spec.theta0, or zeros when empty.
ParamVector initial_theta(const ObjectiveSpec& spec);

ParamVector full_gradient(const Objective& obj, const ParamVector& theta);
ParamVector sample_gradient(const Objective& obj, const ParamVector& theta, RngStream& rng);

}  // namespace fedsim
