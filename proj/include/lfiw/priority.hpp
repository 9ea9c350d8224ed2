#pragma once

#include "lfiw/mdp.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace lfiw {

enum class Scheme { uniform, td_error, oracle_dpi, lfiw };

std::string_view to_string(Scheme scheme);
/// Accepts "uniform", "td_error", "oracle_dpi", "lfiw"; throws std::invalid_argument otherwise.
Scheme parse_scheme(std::string_view name);

/// Nonnegative weights, either one per buffer item or one per (s,a) pair in
/// flat s*A+a order.
struct WeightAssignment {
  Vector weights;
  Scheme scheme = Scheme::uniform;

  std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
  double mean() const { return weights.mean(); }
  double stddev() const;
  Table as_table(int n_states, int n_actions) const { return unflatten(weights, n_states, n_actions); }
};

/// Prioritized-replay constants; alpha = 0.6, beta = 0.4 as in the PER baseline.
struct PerConfig {
  double alpha = 0.6;
  double beta = 0.4;
  double epsilon_priority = 1e-6;
};

WeightAssignment uniform_weights(int n);

/// (|q - target| + eps)^alpha per pair, unnormalized.
Vector td_error_priorities(const QTable& q, const QTable& target, const PerConfig& cfg);

/// Priorities rescaled to mean 1, used directly as loss weights.
WeightAssignment td_error_weights(const QTable& q, const QTable& target, const PerConfig& cfg = {});

/// Importance correction for the resampling form of PER:
/// (N P(i))^-beta / max_j (N P(j))^-beta with P(i) = p_i / sum p.
Vector per_importance_weights(const Vector& priorities, double beta);

/// Thrown when the sampling distribution misses mass that the target has.
class SupportError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// w = d^pi / sampling, rescaled so that E_sampling[w] = 1.
WeightAssignment oracle_dpi_weights(const Occupancy& occupancy, const Table& sampling_dist);

/// Self-normalization with temperature:
///   w~ = w^(1/T) / mean_{reference}(w^(1/T)).
/// reference holds the raw weights of the batch the mean is taken over.
WeightAssignment normalize_weights(const WeightAssignment& raw, double temperature,
                                   std::span<const double> reference);
WeightAssignment normalize_weights(const WeightAssignment& raw, double temperature);

/// Per-entry step 1 - (1 - eta)^w, the effect of w repeated TD updates with rate eta.
double weighted_step_factor(double weight, double eta);

/// One synchronous sweep Q <- Q + (1 - (1-eta)^w) (B^pi Q - Q) using pre-sweep
/// backups. w is per pair.
QTable simulated_weighted_td_sweep(const QTable& q, const TabularMdp& mdp, const Policy& policy,
                                   const WeightAssignment& w, double eta);

/// sum_{s,a} d(s,a) w(s,a) (q - target)^2.
double weighted_td_loss(const QTable& q, const QTable& target, const Table& sampling_dist,
                        const WeightAssignment& w);

/// d^w proportional to d * w, normalized to a probability table.
Table priority_distribution(const Table& sampling_dist, const WeightAssignment& w);

/// Rows "s,a,scheme,weight" for per-pair assignments.
void write_weights_csv(std::ostream& out, const WeightAssignment& w, int n_states, int n_actions);

}  // namespace lfiw
