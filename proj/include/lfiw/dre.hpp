#pragma once

#include "lfiw/priority.hpp"
#include "lfiw/replay.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lfiw {

/// Convex generator f with f(1) = 0, together with what the variational
/// objective needs: f', f'', the conjugate f*, and the compositions
/// f'(e^z), f*(f'(e^z)) and their z-derivatives for a log-ratio z.
///
/// The z-derivatives follow from Fenchel duality: (f*)'(f'(u)) = u, hence
///   d/dz f'(e^z)      = u f''(u)
///   d/dz f*(f'(e^z))  = u^2 f''(u),   u = e^z.
struct FDivergence {
  using Fn = std::function<double(double)>;

  std::string name;
  Fn f;
  Fn f_prime;
  Fn f_second;
  Fn f_star;
  double star_domain_max = 0.0;  ///< f*(t) is finite only for t < star_domain_max

  Fn prime_at_logit;
  Fn star_prime_at_logit;
  Fn d_prime_at_logit;
  Fn d_star_prime_at_logit;

  /// Fills the logit-space members from f', f'', f* by direct composition.
  static FDivergence from_generator(std::string name, Fn f, Fn f_prime, Fn f_second, Fn f_star,
                                    double star_domain_max);
};

/// f(u) = u log u - (1+u) log((1+u)/2), f'(u) = log(2u/(1+u)),
/// f*(t) = -log(2 - e^t) for t < log 2. With w = e^z the objective is the
/// logistic loss of the classifier sigmoid(z) minus 2 log 2.
FDivergence jensen_shannon();

/// One-hot state followed by one-hot action; dimension n_states + n_actions.
Vector featurize(int s, int a, int n_states, int n_actions);
Eigen::MatrixXd featurize_batch(std::span<const Transition> batch, int n_states, int n_actions);
Eigen::MatrixXd featurize_pairs(std::span<const std::pair<int, int>> pairs, int n_states, int n_actions);

/// Two hidden ReLU layers and a scalar logit z; the ratio is w = exp(z) > 0.
///
/// Parameters live in one flat vector, ordered
///   W1 (hidden x input, row-major), b1, W2 (hidden x hidden), b2, w3, b3.
/// Hidden weights and biases start fan-in uniform; the output bias starts at
/// 0 so initial ratios are near 1. zero_output additionally zeroes w3, which
/// makes every initial ratio exactly 1.
class WeightNet {
 public:
  static constexpr int kLayers = 3;

  WeightNet(int input_dim, int hidden, std::uint64_t seed, bool zero_output = false);

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  Eigen::Index n_params() const { return params_.size(); }

  const Vector& params() const { return params_; }
  void set_params(const Vector& params);

  /// Layers 0..2 (two hidden, one output). Frozen layers get zero gradient.
  void set_frozen(int layer, bool frozen);
  bool frozen(int layer) const { return frozen_.at(static_cast<std::size_t>(layer)); }

  /// inputs: one row per sample.
  Vector logits(const Eigen::MatrixXd& inputs) const;
  Vector ratios(const Eigen::MatrixXd& inputs) const;

  /// Gradient of sum_i dlogits(i) * z_i with respect to the parameters.
  Vector backward(const Eigen::MatrixXd& inputs, const Vector& dlogits) const;

  /// Flat index range [begin, end) of a layer's parameters.
  std::pair<Eigen::Index, Eigen::Index> layer_range(int layer) const;

 private:
  struct Activations {
    Eigen::MatrixXd h1;
    Eigen::MatrixXd h2;
    Vector z;
  };
  Activations forward(const Eigen::MatrixXd& inputs) const;

  int input_dim_;
  int hidden_;
  Vector params_;
  std::array<bool, kLayers> frozen_{};
};

/// Adaptive-moment optimizer state (bias-corrected first/second moments).
struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_net(const WeightNet& net, double learning_rate = 3e-4);
};

/// L_w = mean_slow f*(f'(w)) - mean_fast f'(w). Throws std::domain_error if
/// a value falls outside the conjugate's domain.
double lw_loss(const WeightNet& net, const FDivergence& fdiv, const Eigen::MatrixXd& slow,
               const Eigen::MatrixXd& fast);

/// Exact gradient of lw_loss with respect to the parameters.
Vector lw_gradient(const WeightNet& net, const FDivergence& fdiv, const Eigen::MatrixXd& slow,
                   const Eigen::MatrixXd& fast);

/// One Adam step on lw_loss. Returns the loss before the step. A non-finite
/// loss or gradient throws NonFiniteError and leaves net and opt untouched.
double train_step(WeightNet& net, AdamState& opt, const FDivergence& fdiv, const Eigen::MatrixXd& slow,
                  const Eigen::MatrixXd& fast);

/// Raw ratios w(x) per input row (scheme lfiw, not normalized).
WeightAssignment estimate_ratios(const WeightNet& net, const Eigen::MatrixXd& inputs);

/// E_P[f'(w)] - E_Q[f*(f'(w))] over discrete atoms; a lower bound on D_f(P||Q)
/// that is tight at w = P/Q.
double variational_objective(const FDivergence& fdiv, const Vector& p, const Vector& q, const Vector& w);

/// D_f(P||Q) = sum_x Q(x) f(P(x)/Q(x)); requires P << Q.
double exact_divergence(const FDivergence& fdiv, const Vector& p, const Vector& q);

/// Text format: "weightnet <input_dim> <hidden> <n_params>" then one value per line.
void write_params(std::ostream& out, const WeightNet& net);
WeightNet read_params(std::istream& in);

/// CSV "step,loss".
void write_loss_trace(std::ostream& out, std::span<const std::pair<long, double>> trace);

}  // namespace lfiw
