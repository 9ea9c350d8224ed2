#include "lfiw/agent.hpp"

#include "lfiw/bellman.hpp"

#include <cmath>
#include <ostream>
#include <set>

namespace lfiw {

Policy SoftmaxPolicyParams::policy() const {
  Table probs = logits;
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    const double top = probs.row(s).maxCoeff();
    probs.row(s) = (probs.row(s).array() - top).exp();
    probs.row(s) /= probs.row(s).sum();
  }
  return Policy(std::move(probs));
}

double estimation_error(const Occupancy& occupancy, const QTable& q, const QTable& q_true) {
  return (occupancy.unnormalized.array() * (q.values - q_true.values).array().square()).sum();
}

double expected_return(const TabularMdp& mdp, const Policy& policy) {
  return (occupancy(mdp, policy).unnormalized.array() * mdp.reward().array()).sum();
}

WeightAssignment chain_scheme_weights(Scheme scheme, const TabularMdp& mdp, const Policy& policy,
                                      const Occupancy& occ, const QTable& q, const PerConfig& per) {
  switch (scheme) {
    case Scheme::uniform: return uniform_weights(mdp.n_pairs());
    case Scheme::td_error: return td_error_weights(q, bellman_backup(mdp, policy, q), per);
    case Scheme::oracle_dpi: {
      const Table sampling = Table::Constant(mdp.n_states(), mdp.n_actions(), 1.0 / mdp.n_pairs());
      return oracle_dpi_weights(occ, sampling);
    }
    case Scheme::lfiw: break;
  }
  throw std::invalid_argument("chain experiment supports uniform, td_error and oracle_dpi");
}

ExperimentTrace run_chain_experiment(const ChainExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.n_epochs < 0) throw std::invalid_argument("run_chain_experiment: n_epochs must be >= 0");
  const ChainProblem chain = build_chain_mdp(cfg.n_states, cfg.p_right, cfg.gamma);
  const Occupancy occ = occupancy(chain.mdp, chain.policy);
  const QTable q_true = exact_q(chain.mdp, chain.policy);

  Rng rng(seed);
  QTable q = QTable::zeros(chain.mdp.n_states(), chain.mdp.n_actions());
  for (Eigen::Index i = 0; i < q.values.size(); ++i) q.values.data()[i] = uniform01(rng);

  if (cfg.record_every < 1) throw std::invalid_argument("run_chain_experiment: record_every must be >= 1");
  ExperimentTrace trace;
  trace.seed = seed;
  trace.scheme = std::string(to_string(cfg.scheme));
  for (long epoch = 0; epoch <= cfg.n_epochs; ++epoch) {
    const WeightAssignment w = chain_scheme_weights(cfg.scheme, chain.mdp, chain.policy, occ, q, cfg.per);
    const double error = estimation_error(occ, q, q_true);
    const bool stop = cfg.stop_below && error < *cfg.stop_below;
    if (!trace.first_below && error < cfg.threshold) trace.first_below = epoch;
    if (epoch % cfg.record_every == 0 || epoch == cfg.n_epochs || stop) {
      TraceRecord rec;
      rec.step = epoch;
      rec.error = error;
      rec.mean_weight = w.mean();
      rec.weight_std = w.stddev();
      trace.records.push_back(rec);
    }
    if (stop) break;
    if (epoch < cfg.n_epochs) q = simulated_weighted_td_sweep(q, chain.mdp, chain.policy, w, cfg.eta);
  }
  return trace;
}

std::optional<long> steps_to_threshold(const ExperimentTrace& trace, double threshold) {
  for (const TraceRecord& r : trace.records)
    if (r.error < threshold) return r.step;
  return std::nullopt;
}

Table policy_gradient(const SoftmaxPolicyParams& params, const QTable& q, const Occupancy& occupancy) {
  const Policy pi = params.policy();
  const Table& d = occupancy.normalized;
  if (q.values.rows() != d.rows() || q.values.cols() != d.cols() || params.logits.rows() != d.rows() ||
      params.logits.cols() != d.cols())
    throw std::invalid_argument("policy_gradient: shape mismatch");
  Table grad = Table::Zero(d.rows(), d.cols());
  for (Eigen::Index s = 0; s < d.rows(); ++s)
    for (Eigen::Index a = 0; a < d.cols(); ++a) {
      const double weight = d(s, a) * q.values(s, a);
      // d/dphi[s][b] log pi(a|s) = [a == b] - pi(b|s)
      for (Eigen::Index b = 0; b < d.cols(); ++b) grad(s, b) += weight * ((a == b ? 1.0 : 0.0) - pi.probs()(s, b));
    }
  return grad;
}

SoftmaxPolicyParams policy_gradient_step(const SoftmaxPolicyParams& params, const QTable& q,
                                         const Occupancy& occupancy, double step_size) {
  return {params.logits + step_size * policy_gradient(params, q, occupancy)};
}

QTable weighted_td_step(const QTable& q, std::span<const Transition> batch, const WeightAssignment& weights,
                        const Policy& policy, double gamma, double eta, Rng& rng, TdTarget target) {
  if (weights.size() != batch.size()) throw std::invalid_argument("weighted_td_step: one weight per transition");
  std::vector<double> targets(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = batch[i];
    const auto row = policy.probs().row(t.next_state);
    double next;
    if (target == TdTarget::sampled) {
      const int next_action = sample_index(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), rng);
      next = q(t.next_state, next_action);
    } else {
      next = row.dot(q.values.row(t.next_state));
    }
    targets[i] = t.reward + gamma * next;
  }
  QTable out = q;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double& cell = out(batch[i].state, batch[i].action);
    cell += eta * weights.weights(static_cast<Eigen::Index>(i)) * (targets[i] - cell);
  }
  return out;
}

void LfiwConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (fast_capacity < 1 || slow_capacity < 1) throw std::invalid_argument("buffer capacities must be >= 1");
  if (episodes < 1 || episode_length < 1) throw std::invalid_argument("episodes and episode_length must be >= 1");
  if (td_updates_per_episode < 0 || dre_updates_per_td_update < 0 || activation_episodes < 0)
    throw std::invalid_argument("update counts must be >= 0");
  if (td_batch < 1 || dre_batch < 1) throw std::invalid_argument("batch sizes must be >= 1");
  if (!(td_learning_rate > 0.0) || !(dre_learning_rate > 0.0) || !(policy_learning_rate >= 0.0))
    throw std::invalid_argument("learning rates must be positive");
  if (dre_hidden < 1) throw std::invalid_argument("dre_hidden must be >= 1");
  if (eval_interval < 1) throw std::invalid_argument("eval_interval must be >= 1");
  if (method == Scheme::td_error) throw std::invalid_argument("actor-critic methods are uniform, lfiw, oracle_dpi");
}

namespace {

const std::set<std::string>& lfiw_keys() {
  static const std::set<std::string> keys = {
      "method", "temperature", "fast_capacity", "slow_capacity", "activation_episodes", "episodes",
      "episode_length", "td_updates_per_episode", "dre_updates_per_td_update", "td_batch", "dre_batch",
      "td_learning_rate", "policy_learning_rate", "dre_learning_rate", "dre_hidden", "sampled_policy_gradient",
      "td_target", "eval_interval", "seed"};
  return keys;
}

}  // namespace

LfiwConfig lfiw_config_from(const KeyValues& kv, LfiwConfig c) {
  for (const auto& [key, value] : kv)
    if (!lfiw_keys().contains(key)) throw std::invalid_argument("unknown actor-critic config key: " + key);
  c.method = parse_scheme(get_string(kv, "method", std::string(to_string(c.method))));
  c.temperature = get_double(kv, "temperature", c.temperature);
  c.fast_capacity = static_cast<std::size_t>(get_long(kv, "fast_capacity", static_cast<long>(c.fast_capacity)));
  c.slow_capacity = static_cast<std::size_t>(get_long(kv, "slow_capacity", static_cast<long>(c.slow_capacity)));
  c.activation_episodes = get_long(kv, "activation_episodes", c.activation_episodes);
  c.episodes = get_long(kv, "episodes", c.episodes);
  c.episode_length = static_cast<int>(get_long(kv, "episode_length", c.episode_length));
  c.td_updates_per_episode = get_long(kv, "td_updates_per_episode", c.td_updates_per_episode);
  c.dre_updates_per_td_update = get_long(kv, "dre_updates_per_td_update", c.dre_updates_per_td_update);
  c.td_batch = static_cast<std::size_t>(get_long(kv, "td_batch", static_cast<long>(c.td_batch)));
  c.dre_batch = static_cast<std::size_t>(get_long(kv, "dre_batch", static_cast<long>(c.dre_batch)));
  c.td_learning_rate = get_double(kv, "td_learning_rate", c.td_learning_rate);
  c.policy_learning_rate = get_double(kv, "policy_learning_rate", c.policy_learning_rate);
  c.dre_learning_rate = get_double(kv, "dre_learning_rate", c.dre_learning_rate);
  c.dre_hidden = static_cast<int>(get_long(kv, "dre_hidden", c.dre_hidden));
  c.sampled_policy_gradient = get_bool(kv, "sampled_policy_gradient", c.sampled_policy_gradient);
  const std::string target = get_string(kv, "td_target", c.td_target == TdTarget::sampled ? "sampled" : "expected");
  if (target != "sampled" && target != "expected") throw std::invalid_argument("td_target must be sampled or expected");
  c.td_target = target == "sampled" ? TdTarget::sampled : TdTarget::expected;
  c.eval_interval = get_long(kv, "eval_interval", c.eval_interval);
  c.seed = static_cast<std::uint64_t>(get_long(kv, "seed", static_cast<long>(c.seed)));
  return c;
}

KeyValues to_key_values(const LfiwConfig& c) {
  return {
      {"method", std::string(to_string(c.method))},
      {"temperature", format_double(c.temperature)},
      {"fast_capacity", std::to_string(c.fast_capacity)},
      {"slow_capacity", std::to_string(c.slow_capacity)},
      {"activation_episodes", std::to_string(c.activation_episodes)},
      {"episodes", std::to_string(c.episodes)},
      {"episode_length", std::to_string(c.episode_length)},
      {"td_updates_per_episode", std::to_string(c.td_updates_per_episode)},
      {"dre_updates_per_td_update", std::to_string(c.dre_updates_per_td_update)},
      {"td_batch", std::to_string(c.td_batch)},
      {"dre_batch", std::to_string(c.dre_batch)},
      {"td_learning_rate", format_double(c.td_learning_rate)},
      {"policy_learning_rate", format_double(c.policy_learning_rate)},
      {"dre_learning_rate", format_double(c.dre_learning_rate)},
      {"dre_hidden", std::to_string(c.dre_hidden)},
      {"sampled_policy_gradient", c.sampled_policy_gradient ? "true" : "false"},
      {"td_target", c.td_target == TdTarget::sampled ? "sampled" : "expected"},
      {"eval_interval", std::to_string(c.eval_interval)},
      {"seed", std::to_string(c.seed)},
  };
}

namespace {

int sample_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, Rng& rng) {
  return sample_index(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), rng);
}

/// Score-function estimate of the policy gradient from on-policy samples.
Table sampled_policy_gradient(const SoftmaxPolicyParams& params, const QTable& q, std::span<const Transition> batch) {
  const Policy pi = params.policy();
  Table grad = Table::Zero(params.logits.rows(), params.logits.cols());
  for (const Transition& t : batch)
    for (Eigen::Index b = 0; b < grad.cols(); ++b)
      grad(t.state, b) += q(t.state, t.action) * ((t.action == b ? 1.0 : 0.0) - pi(t.state, static_cast<int>(b)));
  return grad / static_cast<double>(batch.size());
}

}  // namespace

ExperimentTrace run_lfiw_actor_critic(const TabularMdp& mdp, const LfiwConfig& cfg) {
  cfg.validate();
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  Rng env_rng(derive_seed(cfg.seed, 1));
  Rng td_rng(derive_seed(cfg.seed, 2));
  Rng dre_rng(derive_seed(cfg.seed, 3));
  Rng pg_rng(derive_seed(cfg.seed, 5));

  QTable q = QTable::zeros(S, A);
  SoftmaxPolicyParams params = SoftmaxPolicyParams::zeros(S, A);
  ReplayBuffer slow(cfg.slow_capacity);
  ReplayBuffer fast(cfg.fast_capacity);
  Table slow_counts = Table::Zero(S, A);  // empirical slow-buffer distribution for oracle_dpi

  const FDivergence fdiv = jensen_shannon();
  std::optional<WeightNet> net;
  AdamState opt;
  if (cfg.method == Scheme::lfiw) {
    net.emplace(S + A, cfg.dre_hidden, derive_seed(cfg.seed, 4));
    opt = AdamState::for_net(*net, cfg.dre_learning_rate);
  }

  ExperimentTrace trace;
  trace.seed = cfg.seed;
  trace.scheme = std::string(to_string(cfg.method));
  long env_steps = 0;
  WeightAssignment last_weights = uniform_weights(1);

  for (long episode = 0; episode < cfg.episodes; ++episode) {
    const Policy policy = params.policy();
    int s = sample_index(std::span<const double>(mdp.initial_dist().data(), static_cast<std::size_t>(S)), env_rng);
    for (int t = 0; t < cfg.episode_length; ++t) {
      const int a = sample_row(policy.probs().row(s), env_rng);
      const int next = sample_row(mdp.transition().row(mdp.pair_index(s, a)), env_rng);
      const Transition tr{s, a, mdp.reward()(s, a), next, static_cast<int>(episode)};
      if (slow.size() == slow.capacity()) slow_counts(slow[0].state, slow[0].action) -= 1.0;
      slow.push(tr);
      slow_counts(s, a) += 1.0;
      fast.push(tr);
      s = next;
      ++env_steps;
    }

    const bool weighting = cfg.method != Scheme::uniform && episode + 1 >= cfg.activation_episodes;
    std::optional<Occupancy> current_occ;
    if (weighting && cfg.method == Scheme::oracle_dpi) current_occ = occupancy(mdp, policy);

    for (long k = 0; k < cfg.td_updates_per_episode; ++k) {
      if (weighting && net) {
        for (long j = 0; j < cfg.dre_updates_per_td_update; ++j) {
          const auto slow_batch = slow.sample_minibatch(cfg.dre_batch, dre_rng);
          const auto fast_batch = fast.sample_minibatch(cfg.dre_batch, dre_rng);
          train_step(*net, opt, fdiv, featurize_batch(slow_batch, S, A), featurize_batch(fast_batch, S, A));
        }
      }
      const auto batch = slow.sample_minibatch(cfg.td_batch, td_rng);
      WeightAssignment w = uniform_weights(static_cast<int>(batch.size()));
      if (weighting) {
        WeightAssignment raw;
        if (net) {
          raw = estimate_ratios(*net, featurize_batch(batch, S, A));
        } else {
          raw.scheme = Scheme::oracle_dpi;
          raw.weights.resize(static_cast<Eigen::Index>(batch.size()));
          const double n = static_cast<double>(slow.size());
          for (std::size_t i = 0; i < batch.size(); ++i)
            raw.weights(static_cast<Eigen::Index>(i)) =
                current_occ->normalized(batch[i].state, batch[i].action) / (slow_counts(batch[i].state, batch[i].action) / n);
        }
        w = normalize_weights(raw, cfg.temperature);
      }
      q = weighted_td_step(q, batch, w, policy, mdp.gamma(), cfg.td_learning_rate, td_rng, cfg.td_target);
      if (!q.all_finite()) throw NonFiniteError("run_lfiw_actor_critic: Q diverged at episode " + std::to_string(episode));
      last_weights = std::move(w);
    }

    if (cfg.sampled_policy_gradient) {
      const auto batch = fast.sample_minibatch(cfg.td_batch, pg_rng);
      params.logits += cfg.policy_learning_rate * sampled_policy_gradient(params, q, batch);
    } else {
      params = policy_gradient_step(params, q, occupancy(mdp, policy), cfg.policy_learning_rate);
    }

    if ((episode + 1) % cfg.eval_interval == 0 || episode + 1 == cfg.episodes) {
      const Policy updated = params.policy();
      const Occupancy occ = occupancy(mdp, updated);
      TraceRecord rec;
      rec.step = env_steps;
      rec.error = estimation_error(occ, q, exact_q(mdp, updated));
      rec.ret = (occ.unnormalized.array() * mdp.reward().array()).sum();
      rec.mean_weight = last_weights.mean();
      rec.weight_std = last_weights.stddev();
      trace.records.push_back(rec);
    }
  }
  return trace;
}

double final_return(const ExperimentTrace& trace) {
  if (trace.records.empty() || !trace.records.back().ret) throw std::logic_error("final_return: trace has no return");
  return *trace.records.back().ret;
}

void write_chain_trace_header(std::ostream& out) { out << "epoch,seed,scheme,error\n"; }

void write_chain_trace_rows(std::ostream& out, const ExperimentTrace& trace) {
  const auto old_precision = out.precision(17);
  for (const TraceRecord& r : trace.records) out << r.step << ',' << trace.seed << ',' << trace.scheme << ',' << r.error << '\n';
  out.precision(old_precision);
}

void write_actor_critic_header(std::ostream& out) { out << "step,seed,method,return,error,mean_weight,weight_std\n"; }

void write_actor_critic_rows(std::ostream& out, const ExperimentTrace& trace) {
  const auto old_precision = out.precision(17);
  for (const TraceRecord& r : trace.records) {
    out << r.step << ',' << trace.seed << ',' << trace.scheme << ',';
    if (r.ret) out << *r.ret;
    out << ',' << r.error << ',' << r.mean_weight << ',' << r.weight_std << '\n';
  }
  out.precision(old_precision);
}

}  // namespace lfiw
