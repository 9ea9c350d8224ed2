#pragma once

#include "lfiw/mdp.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>

namespace lfiw {

/// Probability table d(s, a) defining the norm ||Q||_d^2 = E_d[Q(s,a)^2].
class WeightedNorm {
 public:
  explicit WeightedNorm(Table dist);
  static WeightedNorm uniform(int n_states, int n_actions);

  const Table& dist() const { return dist_; }

 private:
  Table dist_;
};

struct ContractionReport {
  int n_trials = 0;
  double max_ratio = 0.0;
  double gamma = 0.0;
  bool violated = false;
  std::optional<std::pair<QTable, QTable>> witness;  ///< pair that attained max_ratio
};

/// Absolute slack on the ratio before a contraction check counts as violated.
inline constexpr double kContractionTolerance = 1e-9;

/// (B^pi Q)(s,a) = r(s,a) + gamma * sum_{s'} P(s'|s,a) sum_{a'} pi(a'|s') Q(s',a').
QTable bellman_backup(const TabularMdp& mdp, const Policy& policy, const QTable& q);

/// sum_{s,a} d(s,a) (q1 - q2)^2  (squared norm).
double weighted_sq_norm(const QTable& q1, const QTable& q2, const WeightedNorm& norm);

double sup_norm_distance(const QTable& q1, const QTable& q2);

/// Samples Q, Q' with i.i.d. uniform [-1,1] entries and reports the largest
/// ||B Q - B Q'||_inf / ||Q - Q'||_inf. Trial i draws from a stream derived
/// from (seed, i), so results do not depend on evaluation order.
ContractionReport sup_norm_contraction_check(const TabularMdp& mdp, const Policy& policy, int n_trials,
                                             std::uint64_t seed);

/// Same sampling under ||.||_d.
ContractionReport weighted_contraction_check(const TabularMdp& mdp, const Policy& policy,
                                             const WeightedNorm& norm, int n_trials, std::uint64_t seed);

/// ||B Q - B Q'||_d / ||Q - Q'||_d for a specific pair.
double weighted_backup_ratio(const TabularMdp& mdp, const Policy& policy, const WeightedNorm& norm,
                             const QTable& q, const QTable& q_prime);

/// Thrown when d is invariant under one-step propagation, so B^pi contracts
/// by gamma under ||.||_d and no violating pair exists.
class NoCounterexampleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Counterexample {
  QTable q;
  QTable q_prime;
  double nu = 0.0;  ///< perturbation size that produced the witness
  double achieved_ratio = 0.0;
};

/// Witness that B^pi is not a gamma-contraction under ||.||_d when d differs
/// from its propagation d'. Q' = 0 and Q = 1 + nu * [d'(s,a) > d(s,a)].
/// nu is divided by 10 until the ratio exceeds gamma or nu drops below 1e-10;
/// the last attempt is returned either way.
Counterexample build_counterexample(const TabularMdp& mdp, const Policy& policy, const WeightedNorm& norm,
                                    double nu = 1e-1, double stationary_tol = 1e-12);

/// CSV row "trials,gamma,max_ratio,violated" and its header.
void write_contraction_csv_header(std::ostream& out);
void write_contraction_csv_row(std::ostream& out, const ContractionReport& report);
void print_contraction_summary(std::ostream& out, const ContractionReport& report);

}  // namespace lfiw
