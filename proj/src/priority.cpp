#include "lfiw/priority.hpp"

#include "lfiw/bellman.hpp"

#include <cmath>
#include <ostream>

namespace lfiw {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::uniform: return "uniform";
    case Scheme::td_error: return "td_error";
    case Scheme::oracle_dpi: return "oracle_dpi";
    case Scheme::lfiw: return "lfiw";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::uniform, Scheme::td_error, Scheme::oracle_dpi, Scheme::lfiw})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown weighting scheme: " + std::string(name));
}

double WeightAssignment::stddev() const {
  if (weights.size() == 0) return 0.0;
  return std::sqrt((weights.array() - mean()).square().mean());
}

WeightAssignment uniform_weights(int n) {
  if (n < 1) throw std::invalid_argument("uniform_weights: n must be >= 1");
  return {Vector::Ones(n), Scheme::uniform};
}

Vector td_error_priorities(const QTable& q, const QTable& target, const PerConfig& cfg) {
  if (q.values.rows() != target.values.rows() || q.values.cols() != target.values.cols())
    throw std::invalid_argument("td_error_priorities: shape mismatch");
  const Vector err = (flat(q.values) - flat(target.values)).cwiseAbs();
  return (err.array() + cfg.epsilon_priority).pow(cfg.alpha);
}

WeightAssignment td_error_weights(const QTable& q, const QTable& target, const PerConfig& cfg) {
  const Vector p = td_error_priorities(q, target, cfg);
  const double m = p.mean();
  // eps = 0 with every error exactly zero: all priorities tie.
  if (!(m > 0.0)) return {Vector::Ones(p.size()), Scheme::td_error};
  return {p / m, Scheme::td_error};
}

Vector per_importance_weights(const Vector& priorities, double beta) {
  const double total = priorities.sum();
  if (!(total > 0.0)) throw std::invalid_argument("per_importance_weights: priorities sum to zero");
  const double n = static_cast<double>(priorities.size());
  const Vector is = (n * priorities.array() / total).pow(-beta);
  return is / is.maxCoeff();
}

WeightAssignment oracle_dpi_weights(const Occupancy& occupancy, const Table& sampling_dist) {
  const Table& target = occupancy.normalized;
  if (target.rows() != sampling_dist.rows() || target.cols() != sampling_dist.cols())
    throw std::invalid_argument("oracle_dpi_weights: shape mismatch");
  Vector w(target.size());
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const double d = target.data()[i];
    const double b = sampling_dist.data()[i];
    if (b > 0.0) {
      w(i) = d / b;
    } else if (d > 0.0) {
      throw SupportError("oracle_dpi_weights: sampling distribution has zero mass where d^pi is positive");
    } else {
      w(i) = 0.0;
    }
  }
  const double mean_under_sampling = flat(sampling_dist).dot(w);
  return {w / mean_under_sampling, Scheme::oracle_dpi};
}

WeightAssignment normalize_weights(const WeightAssignment& raw, double temperature,
                                   std::span<const double> reference) {
  if (!(temperature > 0.0)) throw std::invalid_argument("normalize_weights: temperature must be positive");
  if (reference.empty()) throw std::invalid_argument("normalize_weights: empty reference batch");
  if ((raw.weights.array() < 0.0).any()) throw std::invalid_argument("normalize_weights: negative raw weight");
  const double inv_t = 1.0 / temperature;
  double denom = 0.0;
  for (double w : reference) {
    if (w < 0.0) throw std::invalid_argument("normalize_weights: negative reference weight");
    denom += std::pow(w, inv_t);
  }
  denom /= static_cast<double>(reference.size());
  if (!(denom > 0.0)) throw std::invalid_argument("normalize_weights: all reference weights are zero");
  return {raw.weights.array().pow(inv_t) / denom, raw.scheme};
}

WeightAssignment normalize_weights(const WeightAssignment& raw, double temperature) {
  return normalize_weights(raw, temperature, std::span<const double>(raw.weights.data(), raw.size()));
}

double weighted_step_factor(double weight, double eta) { return 1.0 - std::pow(1.0 - eta, weight); }

QTable simulated_weighted_td_sweep(const QTable& q, const TabularMdp& mdp, const Policy& policy,
                                   const WeightAssignment& w, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("simulated_weighted_td_sweep: eta must lie in (0, 1)");
  if (static_cast<int>(w.size()) != mdp.n_pairs())
    throw std::invalid_argument("simulated_weighted_td_sweep: need one weight per state-action pair");
  const QTable backup = bellman_backup(mdp, policy, q);
  QTable out = q;
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    const double step = weighted_step_factor(w.weights(i), eta);
    out.values.data()[i] += step * (backup.values.data()[i] - q.values.data()[i]);
  }
  return out;
}

double weighted_td_loss(const QTable& q, const QTable& target, const Table& sampling_dist,
                        const WeightAssignment& w) {
  if (q.values.rows() != target.values.rows() || q.values.cols() != target.values.cols() ||
      q.values.rows() != sampling_dist.rows() || q.values.cols() != sampling_dist.cols() ||
      static_cast<Eigen::Index>(w.size()) != sampling_dist.size())
    throw std::invalid_argument("weighted_td_loss: shape mismatch");
  const Vector diff = flat(q.values) - flat(target.values);
  return (flat(sampling_dist).array() * w.weights.array() * diff.array().square()).sum();
}

Table priority_distribution(const Table& sampling_dist, const WeightAssignment& w) {
  if (static_cast<Eigen::Index>(w.size()) != sampling_dist.size())
    throw std::invalid_argument("priority_distribution: shape mismatch");
  Table out = sampling_dist;
  flat(out) = flat(sampling_dist).cwiseProduct(w.weights);
  const double total = out.sum();
  if (!(total > 0.0)) throw std::invalid_argument("priority_distribution: d * w has no mass");
  return out / total;
}

void write_weights_csv(std::ostream& out, const WeightAssignment& w, int n_states, int n_actions) {
  if (static_cast<int>(w.size()) != n_states * n_actions)
    throw std::invalid_argument("write_weights_csv: weights are not per state-action pair");
  const auto old_precision = out.precision(17);
  out << "s,a,scheme,weight\n";
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      out << s << ',' << a << ',' << to_string(w.scheme) << ',' << w.weights(s * n_actions + a) << '\n';
  out.precision(old_precision);
}

}  // namespace lfiw
