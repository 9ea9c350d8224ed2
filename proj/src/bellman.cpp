#include "lfiw/bellman.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace lfiw {

WeightedNorm::WeightedNorm(Table dist) : dist_(std::move(dist)) {
  if (dist_.size() == 0) throw std::invalid_argument("WeightedNorm: empty distribution");
  if (!dist_.allFinite() || (dist_.array() < 0.0).any())
    throw std::invalid_argument("WeightedNorm: negative or non-finite weight");
  if (std::abs(dist_.sum() - 1.0) > 1e-9) throw std::invalid_argument("WeightedNorm: weights do not sum to 1");
}

WeightedNorm WeightedNorm::uniform(int n_states, int n_actions) {
  return WeightedNorm(Table::Constant(n_states, n_actions, 1.0 / (n_states * n_actions)));
}

QTable bellman_backup(const TabularMdp& mdp, const Policy& policy, const QTable& q) {
  if (q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions())
    throw std::invalid_argument("bellman_backup: Q shape does not match the MDP");
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw std::invalid_argument("bellman_backup: policy shape does not match the MDP");
  const Vector next_value = policy.probs().cwiseProduct(q.values).rowwise().sum();
  const Vector expected = mdp.transition() * next_value;
  QTable out{mdp.reward()};
  flat(out.values) += mdp.gamma() * expected;
  return out;
}

double weighted_sq_norm(const QTable& q1, const QTable& q2, const WeightedNorm& norm) {
  if (q1.values.rows() != q2.values.rows() || q1.values.cols() != q2.values.cols() ||
      q1.values.rows() != norm.dist().rows() || q1.values.cols() != norm.dist().cols())
    throw std::invalid_argument("weighted_sq_norm: shape mismatch");
  return (norm.dist().array() * (q1.values - q2.values).array().square()).sum();
}

double sup_norm_distance(const QTable& q1, const QTable& q2) {
  return (q1.values - q2.values).cwiseAbs().maxCoeff();
}

double weighted_backup_ratio(const TabularMdp& mdp, const Policy& policy, const WeightedNorm& norm,
                             const QTable& q, const QTable& q_prime) {
  const double num = weighted_sq_norm(bellman_backup(mdp, policy, q), bellman_backup(mdp, policy, q_prime), norm);
  const double den = weighted_sq_norm(q, q_prime, norm);
  return std::sqrt(num / den);
}

namespace {

QTable random_q(int S, int A, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QTable q = QTable::zeros(S, A);
  for (Eigen::Index i = 0; i < q.values.size(); ++i) q.values.data()[i] = u(rng);
  return q;
}

template <class Distance>
ContractionReport run_audit(const TabularMdp& mdp, const Policy& policy, int n_trials, std::uint64_t seed,
                            Distance distance) {
  if (n_trials < 1) throw std::invalid_argument("contraction check: n_trials must be >= 1");
  ContractionReport report;
  report.n_trials = n_trials;
  report.gamma = mdp.gamma();
  for (int trial = 0; trial < n_trials; ++trial) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
    QTable q = random_q(mdp.n_states(), mdp.n_actions(), rng);
    QTable q_prime = random_q(mdp.n_states(), mdp.n_actions(), rng);
    double den = distance(q, q_prime);
    while (!(den > 0.0)) {  // degenerate pair: resample
      q_prime = random_q(mdp.n_states(), mdp.n_actions(), rng);
      den = distance(q, q_prime);
    }
    const double num = distance(bellman_backup(mdp, policy, q), bellman_backup(mdp, policy, q_prime));
    const double ratio = num / den;
    if (!report.witness || ratio > report.max_ratio) {
      report.max_ratio = ratio;
      report.witness.emplace(std::move(q), std::move(q_prime));
    }
  }
  report.violated = report.max_ratio > report.gamma + kContractionTolerance;
  return report;
}

}  // namespace

ContractionReport sup_norm_contraction_check(const TabularMdp& mdp, const Policy& policy, int n_trials,
                                             std::uint64_t seed) {
  return run_audit(mdp, policy, n_trials, seed, sup_norm_distance);
}

ContractionReport weighted_contraction_check(const TabularMdp& mdp, const Policy& policy,
                                             const WeightedNorm& norm, int n_trials, std::uint64_t seed) {
  if (norm.dist().rows() != mdp.n_states() || norm.dist().cols() != mdp.n_actions())
    throw std::invalid_argument("weighted_contraction_check: norm shape does not match the MDP");
  return run_audit(mdp, policy, n_trials, seed, [&](const QTable& a, const QTable& b) {
    return std::sqrt(weighted_sq_norm(a, b, norm));
  });
}

Counterexample build_counterexample(const TabularMdp& mdp, const Policy& policy, const WeightedNorm& norm,
                                    double nu, double stationary_tol) {
  if (!(nu > 0.0)) throw std::invalid_argument("build_counterexample: nu must be positive");
  const Table& d = norm.dist();
  const Table next = propagate(mdp, policy, d);
  const Table gap = next - d;
  if (gap.cwiseAbs().maxCoeff() <= stationary_tol)
    throw NoCounterexampleError("build_counterexample: d is invariant under propagation; B^pi is a gamma-contraction");

  // Gamma = {(s,a) : d'(s,a) - d(s,a) > 0}; non-empty because both sum to 1 and differ.
  const Table indicator = (gap.array() > 0.0).cast<double>();
  const QTable q_prime = QTable::zeros(mdp.n_states(), mdp.n_actions());
  Counterexample out;
  for (double step = nu; step >= 1e-10; step /= 10.0) {
    QTable q{Table::Ones(mdp.n_states(), mdp.n_actions()) + step * indicator};
    out.achieved_ratio = weighted_backup_ratio(mdp, policy, norm, q, q_prime);
    out.q = std::move(q);
    out.nu = step;
    if (out.achieved_ratio > mdp.gamma()) break;
  }
  out.q_prime = q_prime;
  return out;
}

void write_contraction_csv_header(std::ostream& out) { out << "trials,gamma,max_ratio,violated\n"; }

void write_contraction_csv_row(std::ostream& out, const ContractionReport& report) {
  const auto old_precision = out.precision(17);
  out << report.n_trials << ',' << report.gamma << ',' << report.max_ratio << ','
      << (report.violated ? "true" : "false") << '\n';
  out.precision(old_precision);
}

void print_contraction_summary(std::ostream& out, const ContractionReport& report) {
  out << "trials:    " << report.n_trials << '\n'
      << "gamma:     " << report.gamma << '\n'
      << "max_ratio: " << std::setprecision(12) << report.max_ratio << '\n'
      << "violated:  " << (report.violated ? "true" : "false") << '\n';
}

}  // namespace lfiw
