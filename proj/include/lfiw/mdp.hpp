#pragma once

#include "lfiw/common.hpp"

#include <iosfwd>

namespace lfiw {

/// Finite discounted MDP (S, A, P, r, gamma, p0) held as dense arrays.
///
/// Transitions are stored as an (S*A) x S matrix whose row s*A+a is the
/// distribution P(. | s, a). Rewards are deterministic, r(s, a).
/// The constructor validates every invariant and throws
/// std::invalid_argument on violation; instances are immutable afterwards.
class TabularMdp {
 public:
  TabularMdp(int n_states, int n_actions, Table transition, Table reward, double gamma,
             Vector initial_dist);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int n_pairs() const { return n_states_ * n_actions_; }
  int pair_index(int s, int a) const { return s * n_actions_ + a; }

  const Table& transition() const { return transition_; }
  double transition(int s, int a, int next) const { return transition_(pair_index(s, a), next); }
  const Table& reward() const { return reward_; }
  double gamma() const { return gamma_; }
  const Vector& initial_dist() const { return initial_dist_; }

  /// Same dynamics and rewards with a different discount or start distribution.
  TabularMdp with_gamma(double gamma) const;
  TabularMdp with_initial_dist(Vector initial_dist) const;

 private:
  int n_states_;
  int n_actions_;
  Table transition_;
  Table reward_;
  double gamma_;
  Vector initial_dist_;
};

/// Stationary stochastic policy pi(a | s); rows are validated distributions.
class Policy {
 public:
  explicit Policy(Table probs);
  static Policy uniform(int n_states, int n_actions);

  const Table& probs() const { return probs_; }
  double operator()(int s, int a) const { return probs_(s, a); }
  int n_states() const { return static_cast<int>(probs_.rows()); }
  int n_actions() const { return static_cast<int>(probs_.cols()); }

 private:
  Table probs_;
};

/// Discounted state-action occupancy: unnormalized sums to 1/(1-gamma),
/// normalized = (1-gamma) * unnormalized is a probability table.
struct Occupancy {
  Table unnormalized;
  Table normalized;
};

struct QTable {
  Table values;

  static QTable zeros(int n_states, int n_actions) { return {Table::Zero(n_states, n_actions)}; }
  int n_states() const { return static_cast<int>(values.rows()); }
  int n_actions() const { return static_cast<int>(values.cols()); }
  double operator()(int s, int a) const { return values(s, a); }
  double& operator()(int s, int a) { return values(s, a); }
  bool all_finite() const { return values.allFinite(); }
};

struct ChainProblem {
  TabularMdp mdp;
  Policy policy;
};

/// Deterministic chain: action 0 moves right, action 1 moves left. Moving
/// left from state 0 self-loops; moving right from the last state self-loops.
/// Reward 1 whenever the move lands on the right-most state (entering or
/// staying), 0 otherwise. Episodes start in state 0. The policy takes the
/// right action with probability p_right everywhere.
ChainProblem build_chain_mdp(int n_states, double p_right, double gamma);

struct GridworldSpec {
  int width = 5;
  int height = 5;
  double slip = 0.1;  ///< probability that the move direction is replaced by a uniformly random one
  double gamma = 0.95;
};

/// width x height grid, actions {up, right, down, left}, walls self-loop.
/// Start in the top-left cell; the bottom-right cell is absorbing and every
/// action taken there earns reward 1.
TabularMdp build_gridworld(const GridworldSpec& spec = {});

/// Random MDP with Dirichlet(1) transition rows, uniform [0,1] rewards and a
/// Dirichlet(1) initial distribution. All rows have full support.
TabularMdp random_mdp(int n_states, int n_actions, double gamma, Rng& rng);
Policy random_policy(int n_states, int n_actions, Rng& rng);
/// Dirichlet(1) draw over n atoms.
Vector random_simplex(int n, Rng& rng);

/// T_pi[(s,a), (s',a')] = P(s'|s,a) * pi(a'|s').
Eigen::MatrixXd pair_transition_matrix(const TabularMdp& mdp, const Policy& policy);

/// p0(s) * pi(a|s) as an S x A table.
Table initial_pair_mass(const TabularMdp& mdp, const Policy& policy);

/// One step of state-action propagation:
/// d'(s',a') = sum_{s,a} P(s'|s,a) pi(a'|s') d(s,a).
Table propagate(const TabularMdp& mdp, const Policy& policy, const Table& dist);

/// Discounted occupancy by a direct dense solve of (I - gamma T_pi^T) m = p0 x pi.
Occupancy occupancy(const TabularMdp& mdp, const Policy& policy);

/// Invariant distribution of the policy's state-action chain (d = propagate(d)).
/// Throws std::domain_error when the chain has more than one invariant
/// distribution.
Table stationary_distribution(const TabularMdp& mdp, const Policy& policy);

/// Q^pi from the linear system Q = r + gamma T_pi Q.
QTable exact_q(const TabularMdp& mdp, const Policy& policy);

struct ValueAdvantage {
  Vector value;     ///< V(s) = sum_a pi(a|s) Q(s,a)
  Table advantage;  ///< A(s,a) = Q(s,a) - V(s)
};

ValueAdvantage value_and_advantage(const TabularMdp& mdp, const Policy& policy, const QTable& q);

/// Plain-text format:
///   n_states n_actions gamma
///   S*A lines of S transition probabilities (row s*A+a)
///   S lines of A rewards
///   one line of S initial probabilities
/// Lines starting with '#' and blank lines are ignored on read.
void write_mdp(std::ostream& out, const TabularMdp& mdp);
TabularMdp read_mdp(std::istream& in);
TabularMdp load_mdp(const std::string& path);

/// Whitespace-separated S x A table, one state per line ('#' comments allowed).
Table read_table(std::istream& in, int rows, int cols);

}  // namespace lfiw
