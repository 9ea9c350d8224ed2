#pragma once

#include "lfiw/dre.hpp"
#include "lfiw/mdp.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lfiw {

/// Two known distributions over state-action pairs, flattened s*A+a.
/// The estimator learns fast/slow.
struct DistPair {
  std::string name;
  int n_states = 0;
  int n_actions = 0;
  Vector fast;
  Vector slow;

  Vector true_ratio() const;  ///< fast/slow, 0 where slow is 0
};

/// Fast (0.7, 0.3) against slow (0.3, 0.7) on two atoms.
DistPair two_atom_pair();

/// The same four-atom distribution on both sides.
DistPair identical_pair();

/// Normalized occupancies on the default gridworld: fast is a random softmax
/// policy, slow an even mixture of that policy and the uniform policy.
DistPair gridworld_policy_pair(std::uint64_t seed);

DistPair make_dist_pair(const std::string& name, std::uint64_t seed);

struct DreBenchConfig {
  long steps = 2000;
  std::size_t batch = 256;
  int hidden = 64;
  double learning_rate = 1e-3;
  long log_interval = 100;
  std::uint64_t seed = 0;
};

struct DreBenchRow {
  long step = 0;
  double loss = 0.0;
  double ratio_rel_err = 0.0;
};

struct DreBenchResult {
  std::vector<DreBenchRow> trace;
  Vector estimated_ratio;
  double mean_rel_err = 0.0;     ///< mean over slow-support atoms of |w_hat - w| / w
  double max_abs_dev = 0.0;      ///< max over slow-support atoms of |w_hat - w|
  double objective = 0.0;        ///< variational objective at w_hat
  double divergence = 0.0;       ///< exact D_f(fast || slow)
  double bound_gap = 0.0;        ///< (divergence - objective) / divergence; 0 if divergence is 0
};

/// Trains a Jensen-Shannon WeightNet on minibatches drawn from the pair.
/// Throws NonFiniteError if training diverges.
DreBenchResult run_dre_bench(const DistPair& pair, const DreBenchConfig& cfg);

/// Mean relative error of est against truth over atoms with slow mass.
double mean_relative_ratio_error(const DistPair& pair, const Vector& estimated);

/// CSV "step,loss,ratio_rel_err".
void write_dre_bench_csv(std::ostream& out, const DreBenchResult& result);

}  // namespace lfiw
