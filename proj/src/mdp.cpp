#include "lfiw/mdp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lfiw {
namespace {

constexpr double kSimplexTol = 1e-9;

void check_distribution(const Eigen::Ref<const Vector>& row, const char* what) {
  if (!row.allFinite() || (row.array() < 0.0).any())
    throw std::invalid_argument(std::string(what) + ": negative or non-finite probability");
  if (std::abs(row.sum() - 1.0) > kSimplexTol)
    throw std::invalid_argument(std::string(what) + ": probabilities do not sum to 1");
}

}  // namespace

TabularMdp::TabularMdp(int n_states, int n_actions, Table transition, Table reward, double gamma,
                       Vector initial_dist)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      gamma_(gamma),
      initial_dist_(std::move(initial_dist)) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("TabularMdp: empty state or action set");
  if (transition_.rows() != n_pairs() || transition_.cols() != n_states)
    throw std::invalid_argument("TabularMdp: transition must be (S*A) x S");
  if (reward_.rows() != n_states || reward_.cols() != n_actions)
    throw std::invalid_argument("TabularMdp: reward must be S x A");
  if (initial_dist_.size() != n_states) throw std::invalid_argument("TabularMdp: initial_dist must have S entries");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMdp: gamma must lie in [0, 1)");
  if (!reward_.allFinite()) throw std::invalid_argument("TabularMdp: non-finite reward");
  for (int i = 0; i < n_pairs(); ++i) check_distribution(transition_.row(i).transpose(), "TabularMdp transition row");
  check_distribution(initial_dist_, "TabularMdp initial_dist");
}

TabularMdp TabularMdp::with_gamma(double gamma) const {
  return {n_states_, n_actions_, transition_, reward_, gamma, initial_dist_};
}

TabularMdp TabularMdp::with_initial_dist(Vector initial_dist) const {
  return {n_states_, n_actions_, transition_, reward_, gamma_, std::move(initial_dist)};
}

Policy::Policy(Table probs) : probs_(std::move(probs)) {
  if (probs_.rows() < 1 || probs_.cols() < 1) throw std::invalid_argument("Policy: empty table");
  for (Eigen::Index s = 0; s < probs_.rows(); ++s) check_distribution(probs_.row(s).transpose(), "Policy row");
}

Policy Policy::uniform(int n_states, int n_actions) {
  return Policy(Table::Constant(n_states, n_actions, 1.0 / n_actions));
}

ChainProblem build_chain_mdp(int n_states, double p_right, double gamma) {
  if (n_states < 2) throw std::invalid_argument("build_chain_mdp: need at least 2 states");
  if (!(p_right >= 0.0 && p_right <= 1.0)) throw std::invalid_argument("build_chain_mdp: p_right must lie in [0, 1]");
  constexpr int kRight = 0;
  constexpr int kLeft = 1;
  const int last = n_states - 1;
  Table transition = Table::Zero(n_states * 2, n_states);
  Table reward = Table::Zero(n_states, 2);
  for (int s = 0; s < n_states; ++s) {
    const int right = std::min(s + 1, last);
    const int left = std::max(s - 1, 0);
    transition(s * 2 + kRight, right) = 1.0;
    transition(s * 2 + kLeft, left) = 1.0;
    if (right == last) reward(s, kRight) = 1.0;
    if (left == last) reward(s, kLeft) = 1.0;
  }
  Vector start = Vector::Zero(n_states);
  start(0) = 1.0;
  Table probs(n_states, 2);
  probs.col(kRight).setConstant(p_right);
  probs.col(kLeft).setConstant(1.0 - p_right);
  return {TabularMdp(n_states, 2, std::move(transition), std::move(reward), gamma, std::move(start)),
          Policy(std::move(probs))};
}

TabularMdp build_gridworld(const GridworldSpec& spec) {
  if (spec.width < 1 || spec.height < 1) throw std::invalid_argument("build_gridworld: empty grid");
  if (!(spec.slip >= 0.0 && spec.slip <= 1.0)) throw std::invalid_argument("build_gridworld: slip must lie in [0, 1]");
  const int n = spec.width * spec.height;
  const int goal = n - 1;
  constexpr int kActions = 4;
  constexpr int dx[kActions] = {0, 1, 0, -1};
  constexpr int dy[kActions] = {-1, 0, 1, 0};
  auto move = [&](int s, int dir) {
    const int x = s % spec.width + dx[dir];
    const int y = s / spec.width + dy[dir];
    if (x < 0 || y < 0 || x >= spec.width || y >= spec.height) return s;
    return y * spec.width + x;
  };
  Table transition = Table::Zero(n * kActions, n);
  Table reward = Table::Zero(n, kActions);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < kActions; ++a) {
      const int row = s * kActions + a;
      if (s == goal) {
        transition(row, goal) = 1.0;
        reward(s, a) = 1.0;
        continue;
      }
      transition(row, move(s, a)) += 1.0 - spec.slip;
      for (int dir = 0; dir < kActions; ++dir) transition(row, move(s, dir)) += spec.slip / kActions;
    }
  }
  Vector start = Vector::Zero(n);
  start(0) = 1.0;
  return {n, kActions, std::move(transition), std::move(reward), spec.gamma, std::move(start)};
}

Vector random_simplex(int n, Rng& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v / v.sum();
}

TabularMdp random_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  Table transition(n_states * n_actions, n_states);
  for (int i = 0; i < n_states * n_actions; ++i) transition.row(i) = random_simplex(n_states, rng).transpose();
  Table reward(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) reward(s, a) = uniform01(rng);
  Vector start = random_simplex(n_states, rng);
  return {n_states, n_actions, std::move(transition), std::move(reward), gamma, std::move(start)};
}

Policy random_policy(int n_states, int n_actions, Rng& rng) {
  Table probs(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) probs.row(s) = random_simplex(n_actions, rng).transpose();
  return Policy(std::move(probs));
}

namespace {

void check_shapes(const TabularMdp& mdp, const Policy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw std::invalid_argument("policy shape does not match the MDP");
}

}  // namespace

Eigen::MatrixXd pair_transition_matrix(const TabularMdp& mdp, const Policy& policy) {
  check_shapes(mdp, policy);
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  Eigen::MatrixXd t(S * A, S * A);
  for (int i = 0; i < S * A; ++i)
    for (int next = 0; next < S; ++next)
      for (int b = 0; b < A; ++b) t(i, next * A + b) = mdp.transition()(i, next) * policy(next, b);
  return t;
}

Table initial_pair_mass(const TabularMdp& mdp, const Policy& policy) {
  check_shapes(mdp, policy);
  return policy.probs().array().colwise() * mdp.initial_dist().array();
}

Table propagate(const TabularMdp& mdp, const Policy& policy, const Table& dist) {
  check_shapes(mdp, policy);
  if (dist.rows() != mdp.n_states() || dist.cols() != mdp.n_actions())
    throw std::invalid_argument("propagate: distribution shape does not match the MDP");
  // State marginal of the next step, then spread over actions by pi.
  const Vector next_state = mdp.transition().transpose() * flat(dist);
  return policy.probs().array().colwise() * next_state.array();
}

Occupancy occupancy(const TabularMdp& mdp, const Policy& policy) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const Eigen::MatrixXd t = pair_transition_matrix(mdp, policy);
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S * A, S * A) - mdp.gamma() * t.transpose();
  const Table start = initial_pair_mass(mdp, policy);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  const Vector m = lu.solve(Vector(flat(start)));
  if (!m.allFinite()) throw std::runtime_error("occupancy: singular linear system");
  Occupancy occ;
  occ.unnormalized = unflatten(m, S, A);
  occ.normalized = occ.unnormalized * (1.0 - mdp.gamma());
  return occ;
}

Table stationary_distribution(const TabularMdp& mdp, const Policy& policy) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const int n = S * A;
  const Eigen::MatrixXd t = pair_transition_matrix(mdp, policy);
  const Eigen::MatrixXd generator = Eigen::MatrixXd::Identity(n, n) - t.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(generator);
  lu.setThreshold(1e-10);
  if (lu.rank() < n - 1)
    throw std::domain_error("stationary_distribution: the policy's chain has several invariant distributions");
  Eigen::MatrixXd augmented(n + 1, n);
  augmented << generator, Eigen::RowVectorXd::Ones(n);
  Vector rhs = Vector::Zero(n + 1);
  rhs(n) = 1.0;
  Vector m = augmented.colPivHouseholderQr().solve(rhs);
  m = m.cwiseMax(0.0);
  m /= m.sum();
  return unflatten(m, S, A);
}

QTable exact_q(const TabularMdp& mdp, const Policy& policy) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const Eigen::MatrixXd t = pair_transition_matrix(mdp, policy);
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S * A, S * A) - mdp.gamma() * t;
  const Vector q = system.partialPivLu().solve(Vector(flat(mdp.reward())));
  return {unflatten(q, S, A)};
}

ValueAdvantage value_and_advantage(const TabularMdp& mdp, const Policy& policy, const QTable& q) {
  check_shapes(mdp, policy);
  if (q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions())
    throw std::invalid_argument("value_and_advantage: Q shape does not match the MDP");
  ValueAdvantage out;
  out.value = policy.probs().cwiseProduct(q.values).rowwise().sum();
  out.advantage = q.values.colwise() - out.value;
  return out;
}

void write_mdp(std::ostream& out, const TabularMdp& mdp) {
  const auto old_precision = out.precision(17);
  out << mdp.n_states() << ' ' << mdp.n_actions() << ' ' << mdp.gamma() << '\n';
  auto write_rows = [&](const Table& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) out << (j ? " " : "") << t(i, j);
      out << '\n';
    }
  };
  write_rows(mdp.transition());
  write_rows(mdp.reward());
  for (int s = 0; s < mdp.n_states(); ++s) out << (s ? " " : "") << mdp.initial_dist()(s);
  out << '\n';
  out.precision(old_precision);
}

namespace {

/// Token stream over the non-comment content of a text block.
class Tokens {
 public:
  explicit Tokens(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      body_ << line << '\n';
    }
  }

  template <class T>
  T next(const char* what) {
    T value{};
    if (!(body_ >> value)) throw std::invalid_argument(std::string("missing or malformed ") + what);
    return value;
  }

 private:
  std::stringstream body_;
};

}  // namespace

TabularMdp read_mdp(std::istream& in) {
  Tokens tok(in);
  const int S = tok.next<int>("n_states");
  const int A = tok.next<int>("n_actions");
  const double gamma = tok.next<double>("gamma");
  if (S < 1 || A < 1) throw std::invalid_argument("read_mdp: n_states and n_actions must be positive");
  Table transition(S * A, S);
  for (int i = 0; i < S * A; ++i)
    for (int j = 0; j < S; ++j) transition(i, j) = tok.next<double>("transition entry");
  Table reward(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) reward(s, a) = tok.next<double>("reward entry");
  Vector start(S);
  for (int s = 0; s < S; ++s) start(s) = tok.next<double>("initial probability");
  return {S, A, std::move(transition), std::move(reward), gamma, std::move(start)};
}

TabularMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open MDP file: " + path);
  return read_mdp(in);
}

Table read_table(std::istream& in, int rows, int cols) {
  Tokens tok(in);
  Table t(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) t(i, j) = tok.next<double>("table entry");
  return t;
}

}  // namespace lfiw
