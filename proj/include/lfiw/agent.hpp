#pragma once

#include "lfiw/config.hpp"
#include "lfiw/dre.hpp"
#include "lfiw/mdp.hpp"
#include "lfiw/priority.hpp"
#include "lfiw/replay.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lfiw {

/// Logits phi[s][a]; the policy is the row-wise softmax.
struct SoftmaxPolicyParams {
  Table logits;

  static SoftmaxPolicyParams zeros(int n_states, int n_actions) { return {Table::Zero(n_states, n_actions)}; }
  Policy policy() const;
};

struct TraceRecord {
  long step = 0;
  double error = 0.0;                ///< E_{d^pi}[(Q - Q^pi)^2]
  std::optional<double> ret;         ///< expected discounted return of the current policy
  double mean_weight = 1.0;
  double weight_std = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

struct ExperimentTrace {
  std::uint64_t seed = 0;
  std::string scheme;
  std::vector<TraceRecord> records;
  /// First epoch whose error fell below the chain threshold, even if that
  /// epoch was not recorded.
  std::optional<long> first_below;
};

/// E_{d^pi}[(Q - Q^pi)^2] with d^pi the unnormalized discounted occupancy
/// (total mass 1/(1-gamma)).
double estimation_error(const Occupancy& occupancy, const QTable& q, const QTable& q_true);

/// J(pi) = sum_{s,a} d^pi(s,a) r(s,a) over the unnormalized occupancy.
double expected_return(const TabularMdp& mdp, const Policy& policy);

struct ChainExperimentConfig {
  Scheme scheme = Scheme::uniform;
  double p_right = 0.8;
  double eta = 0.1;
  long n_epochs = 20000;
  int n_states = 5;
  double gamma = 0.99;
  PerConfig per;
  double threshold = 1.0;
  long record_every = 1;  ///< epochs 0, k, 2k, ... and the last one are recorded
  /// Stop after the first epoch whose error is below this value.
  std::optional<double> stop_below;
};

/// Tabular policy evaluation on the chain: Q starts uniform in [0,1], each
/// epoch computes the scheme's mean-one weights over all pairs and applies
/// one simulated weighted sweep.
ExperimentTrace run_chain_experiment(const ChainExperimentConfig& cfg, std::uint64_t seed);

/// Mean-one weights of a chain scheme for the current Q (uniform, td_error, oracle_dpi).
WeightAssignment chain_scheme_weights(Scheme scheme, const TabularMdp& mdp, const Policy& policy,
                                      const Occupancy& occupancy, const QTable& q, const PerConfig& per);

/// First recorded step whose error is below threshold.
std::optional<long> steps_to_threshold(const ExperimentTrace& trace, double threshold = 1.0);

/// sum_{s,a} d(s,a) grad_phi log pi(a|s) q(s,a) with d the normalized occupancy.
Table policy_gradient(const SoftmaxPolicyParams& params, const QTable& q, const Occupancy& occupancy);

/// Gradient ascent phi <- phi + step_size * policy_gradient(...).
SoftmaxPolicyParams policy_gradient_step(const SoftmaxPolicyParams& params, const QTable& q,
                                         const Occupancy& occupancy, double step_size);

enum class TdTarget { sampled, expected };

/// q[s][a] += eta * w_i * (r + gamma q[s'][a'] - q[s][a]) for each batch item
/// in order. Targets use the pre-step Q and are held constant; a' ~ pi(.|s')
/// (sampled) or averaged under pi (expected).
QTable weighted_td_step(const QTable& q, std::span<const Transition> batch, const WeightAssignment& weights,
                        const Policy& policy, double gamma, double eta, Rng& rng,
                        TdTarget target = TdTarget::sampled);

struct LfiwConfig {
  Scheme method = Scheme::lfiw;  ///< uniform, lfiw or oracle_dpi
  double temperature = 5.0;
  std::size_t fast_capacity = 1000;
  std::size_t slow_capacity = 50000;
  long activation_episodes = 100;  ///< episodes collected before weighting turns on
  long episodes = 300;
  int episode_length = 50;
  long td_updates_per_episode = 50;   ///< 1 gradient step per environment step
  long dre_updates_per_td_update = 1;
  std::size_t td_batch = 32;
  std::size_t dre_batch = 64;
  double td_learning_rate = 0.1;
  double policy_learning_rate = 2.0;
  double dre_learning_rate = 3e-4;
  int dre_hidden = 32;
  bool sampled_policy_gradient = false;
  TdTarget td_target = TdTarget::sampled;
  long eval_interval = 10;  ///< episodes between trace records
  std::uint64_t seed = 0;

  void validate() const;
};

/// Applies recognized keys; unknown keys throw std::invalid_argument.
LfiwConfig lfiw_config_from(const KeyValues& kv, LfiwConfig base = {});
KeyValues to_key_values(const LfiwConfig& cfg);

/// Tabular actor-critic with likelihood-free importance weighted replay.
/// Each episode: roll out under the softmax policy and push every transition
/// to both buffers; then td_updates_per_episode rounds of (estimator update,
/// weighted TD step on a slow minibatch), then one policy-gradient step using
/// the learned Q. Weights are exactly 1 until activation_episodes episodes
/// have been collected. Independent random streams drive the environment,
/// TD sampling, and the estimator, so weighting does not perturb the others.
ExperimentTrace run_lfiw_actor_critic(const TabularMdp& mdp, const LfiwConfig& cfg);

/// Final recorded return of an actor-critic trace.
double final_return(const ExperimentTrace& trace);

/// CSV "epoch,seed,scheme,error".
void write_chain_trace_header(std::ostream& out);
void write_chain_trace_rows(std::ostream& out, const ExperimentTrace& trace);

/// CSV "step,seed,method,return,error,mean_weight,weight_std".
void write_actor_critic_header(std::ostream& out);
void write_actor_critic_rows(std::ostream& out, const ExperimentTrace& trace);

}  // namespace lfiw
