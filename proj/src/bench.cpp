#include "lfiw/bench.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace lfiw {

Vector DistPair::true_ratio() const {
  Vector w = Vector::Zero(slow.size());
  for (Eigen::Index i = 0; i < slow.size(); ++i)
    if (slow(i) > 0.0) w(i) = fast(i) / slow(i);
  return w;
}

DistPair two_atom_pair() {
  DistPair p{"two-atom", 2, 1, Vector(2), Vector(2)};
  p.fast << 0.7, 0.3;
  p.slow << 0.3, 0.7;
  return p;
}

DistPair identical_pair() {
  DistPair p{"identical", 2, 2, Vector(4), Vector(4)};
  p.fast << 0.1, 0.2, 0.3, 0.4;
  p.slow = p.fast;
  return p;
}

DistPair gridworld_policy_pair(std::uint64_t seed) {
  const TabularMdp mdp = build_gridworld();
  Rng rng(seed);
  const Policy pi = random_policy(mdp.n_states(), mdp.n_actions(), rng);
  const Policy mix(0.5 * (pi.probs() + Policy::uniform(mdp.n_states(), mdp.n_actions()).probs()));
  DistPair p{"gridworld-policies", mdp.n_states(), mdp.n_actions(), flat(occupancy(mdp, pi).normalized),
             flat(occupancy(mdp, mix).normalized)};
  return p;
}

DistPair make_dist_pair(const std::string& name, std::uint64_t seed) {
  if (name == "two-atom") return two_atom_pair();
  if (name == "identical") return identical_pair();
  if (name == "gridworld-policies") return gridworld_policy_pair(seed);
  throw std::invalid_argument("unknown dist pair: " + name);
}

double mean_relative_ratio_error(const DistPair& pair, const Vector& estimated) {
  const Vector truth = pair.true_ratio();
  double total = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (!(pair.slow(i) > 0.0)) continue;
    total += truth(i) > 0.0 ? std::abs(estimated(i) - truth(i)) / truth(i) : std::abs(estimated(i));
    ++count;
  }
  return count ? total / count : 0.0;
}

namespace {

Eigen::MatrixXd draw(const Eigen::MatrixXd& atoms, const Vector& dist, std::size_t n, Rng& rng) {
  const std::span<const double> probs(dist.data(), static_cast<std::size_t>(dist.size()));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), atoms.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = atoms.row(sample_index(probs, rng));
  return out;
}

}  // namespace

DreBenchResult run_dre_bench(const DistPair& pair, const DreBenchConfig& cfg) {
  if (cfg.steps < 0 || cfg.batch < 1 || cfg.hidden < 1 || cfg.log_interval < 1)
    throw std::invalid_argument("run_dre_bench: invalid config");
  const int S = pair.n_states;
  const int A = pair.n_actions;
  std::vector<std::pair<int, int>> pairs;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) pairs.emplace_back(s, a);
  const Eigen::MatrixXd atoms = featurize_pairs(pairs, S, A);

  const FDivergence fdiv = jensen_shannon();
  WeightNet net(S + A, cfg.hidden, derive_seed(cfg.seed, 4));
  AdamState opt = AdamState::for_net(net, cfg.learning_rate);
  Rng rng(derive_seed(cfg.seed, 3));

  DreBenchResult result;
  for (long step = 0; step < cfg.steps; ++step) {
    const Eigen::MatrixXd slow = draw(atoms, pair.slow, cfg.batch, rng);
    const Eigen::MatrixXd fast = draw(atoms, pair.fast, cfg.batch, rng);
    const double loss = train_step(net, opt, fdiv, slow, fast);
    if ((step + 1) % cfg.log_interval == 0 || step + 1 == cfg.steps)
      result.trace.push_back({step + 1, loss, mean_relative_ratio_error(pair, net.ratios(atoms))});
  }

  result.estimated_ratio = net.ratios(atoms);
  const Vector truth = pair.true_ratio();
  result.mean_rel_err = mean_relative_ratio_error(pair, result.estimated_ratio);
  for (Eigen::Index i = 0; i < truth.size(); ++i)
    if (pair.slow(i) > 0.0) result.max_abs_dev = std::max(result.max_abs_dev, std::abs(result.estimated_ratio(i) - truth(i)));
  result.objective = variational_objective(fdiv, pair.fast, pair.slow, result.estimated_ratio);
  result.divergence = exact_divergence(fdiv, pair.fast, pair.slow);
  result.bound_gap = result.divergence > 0.0 ? (result.divergence - result.objective) / result.divergence : 0.0;
  return result;
}

void write_dre_bench_csv(std::ostream& out, const DreBenchResult& result) {
  const auto old_precision = out.precision(17);
  out << "step,loss,ratio_rel_err\n";
  for (const DreBenchRow& r : result.trace) out << r.step << ',' << r.loss << ',' << r.ratio_rel_err << '\n';
  out.precision(old_precision);
}

}  // namespace lfiw
