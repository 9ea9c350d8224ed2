#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace lfiw {

/// Dense row-major table. State-action tables are n_states x n_actions, so
/// the flat index of (s, a) is s * n_actions + a.
using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

inline Eigen::Map<const Vector> flat(const Table& t) { return {t.data(), t.size()}; }
inline Eigen::Map<Vector> flat(Table& t) { return {t.data(), t.size()}; }

inline Table unflatten(const Vector& v, int rows, int cols) {
  Table t(rows, cols);
  flat(t) = v;
  return t;
}

/// splitmix64 finalizer; used to derive independent child seeds from a root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Inverse-CDF draw from a discrete distribution given as nonnegative weights.
inline int sample_index(std::span<const double> probs, Rng& rng) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // u landed on the rounding slack at the top; take the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return static_cast<int>(i);
  throw std::invalid_argument("sample_index: all weights are zero");
}

/// Thrown when an iterative or training procedure produces NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lfiw
