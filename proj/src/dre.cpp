#include "lfiw/dre.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

namespace lfiw {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

FDivergence FDivergence::from_generator(std::string name, Fn f, Fn f_prime, Fn f_second, Fn f_star,
                                        double star_domain_max) {
  FDivergence d;
  d.name = std::move(name);
  d.f = std::move(f);
  d.f_prime = std::move(f_prime);
  d.f_second = std::move(f_second);
  d.f_star = std::move(f_star);
  d.star_domain_max = star_domain_max;
  d.prime_at_logit = [fp = d.f_prime](double z) { return fp(std::exp(z)); };
  d.star_prime_at_logit = [fp = d.f_prime, fs = d.f_star](double z) { return fs(fp(std::exp(z))); };
  d.d_prime_at_logit = [f2 = d.f_second](double z) {
    const double u = std::exp(z);
    return u * f2(u);
  };
  d.d_star_prime_at_logit = [f2 = d.f_second](double z) {
    const double u = std::exp(z);
    return u * u * f2(u);
  };
  return d;
}

FDivergence jensen_shannon() {
  constexpr double ln2 = std::numbers::ln2;
  FDivergence d = FDivergence::from_generator(
      "jensen_shannon",
      [](double u) {
        const double a = u > 0.0 ? u * std::log(u) : 0.0;
        return a - (1.0 + u) * std::log((1.0 + u) / 2.0);
      },
      [](double u) { return std::log(2.0 * u / (1.0 + u)); },
      [](double u) { return 1.0 / (u * (1.0 + u)); },
      [](double t) {
        if (!(t < ln2)) return std::numeric_limits<double>::infinity();
        return -std::log(2.0 - std::exp(t));
      },
      ln2);
  // Overflow-free forms in terms of the logit.
  d.prime_at_logit = [](double z) { return ln2 - softplus(-z); };
  d.star_prime_at_logit = [](double z) { return softplus(z) - ln2; };
  d.d_prime_at_logit = [](double z) { return sigmoid(-z); };
  d.d_star_prime_at_logit = [](double z) { return sigmoid(z); };
  return d;
}

Vector featurize(int s, int a, int n_states, int n_actions) {
  if (s < 0 || s >= n_states || a < 0 || a >= n_actions)
    throw std::out_of_range("featurize: state or action index out of range");
  Vector x = Vector::Zero(n_states + n_actions);
  x(s) = 1.0;
  x(n_states + a) = 1.0;
  return x;
}

Eigen::MatrixXd featurize_batch(std::span<const Transition> batch, int n_states, int n_actions) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(batch.size()), n_states + n_actions);
  for (std::size_t i = 0; i < batch.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = featurize(batch[i].state, batch[i].action, n_states, n_actions).transpose();
  return x;
}

Eigen::MatrixXd featurize_pairs(std::span<const std::pair<int, int>> pairs, int n_states, int n_actions) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(pairs.size()), n_states + n_actions);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = featurize(pairs[i].first, pairs[i].second, n_states, n_actions).transpose();
  return x;
}

WeightNet::WeightNet(int input_dim, int hidden, std::uint64_t seed, bool zero_output)
    : input_dim_(input_dim), hidden_(hidden) {
  if (input_dim < 1 || hidden < 1) throw std::invalid_argument("WeightNet: dimensions must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(hidden) * input_dim + hidden +
                         static_cast<Eigen::Index>(hidden) * hidden + hidden + hidden + 1;
  params_ = Vector::Zero(n);
  Rng rng(seed);
  auto fill = [&](int layer, double fan_in) {
    const auto [begin, end] = layer_range(layer);
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (Eigen::Index i = begin; i < end; ++i) params_(i) = u(rng);
  };
  fill(0, input_dim);
  fill(1, hidden);
  if (!zero_output) {
    fill(2, hidden);
  }
  params_(n - 1) = 0.0;
}

void WeightNet::set_params(const Vector& params) {
  if (params.size() != params_.size()) throw std::invalid_argument("WeightNet::set_params: size mismatch");
  params_ = params;
}

void WeightNet::set_frozen(int layer, bool frozen) { frozen_.at(static_cast<std::size_t>(layer)) = frozen; }

std::pair<Eigen::Index, Eigen::Index> WeightNet::layer_range(int layer) const {
  const Eigen::Index l0 = static_cast<Eigen::Index>(hidden_) * input_dim_ + hidden_;
  const Eigen::Index l1 = static_cast<Eigen::Index>(hidden_) * hidden_ + hidden_;
  switch (layer) {
    case 0: return {0, l0};
    case 1: return {l0, l0 + l1};
    case 2: return {l0 + l1, l0 + l1 + hidden_ + 1};
    default: throw std::out_of_range("WeightNet: layer index out of range");
  }
}

WeightNet::Activations WeightNet::forward(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != input_dim_) throw std::invalid_argument("WeightNet: input dimension mismatch");
  const double* p = params_.data();
  const ConstMatrixMap w1(p, hidden_, input_dim_);
  p += static_cast<Eigen::Index>(hidden_) * input_dim_;
  const Eigen::Map<const Vector> b1(p, hidden_);
  p += hidden_;
  const ConstMatrixMap w2(p, hidden_, hidden_);
  p += static_cast<Eigen::Index>(hidden_) * hidden_;
  const Eigen::Map<const Vector> b2(p, hidden_);
  p += hidden_;
  const Eigen::Map<const Vector> w3(p, hidden_);
  const double b3 = p[hidden_];

  Activations act;
  act.h1 = ((inputs * w1.transpose()).rowwise() + b1.transpose()).cwiseMax(0.0);
  act.h2 = ((act.h1 * w2.transpose()).rowwise() + b2.transpose()).cwiseMax(0.0);
  act.z = (act.h2 * w3).array() + b3;
  return act;
}

Vector WeightNet::logits(const Eigen::MatrixXd& inputs) const { return forward(inputs).z; }

Vector WeightNet::ratios(const Eigen::MatrixXd& inputs) const { return logits(inputs).array().exp(); }

Vector WeightNet::backward(const Eigen::MatrixXd& inputs, const Vector& dlogits) const {
  if (dlogits.size() != inputs.rows()) throw std::invalid_argument("WeightNet::backward: batch size mismatch");
  const Activations act = forward(inputs);
  const double* p = params_.data();
  const ConstMatrixMap w2(p + static_cast<Eigen::Index>(hidden_) * input_dim_ + hidden_, hidden_, hidden_);
  const Eigen::Map<const Vector> w3(p + layer_range(2).first, hidden_);

  Vector grad = Vector::Zero(params_.size());
  double* g = grad.data();
  Eigen::Map<RowMatrix> gw1(g, hidden_, input_dim_);
  g += static_cast<Eigen::Index>(hidden_) * input_dim_;
  Eigen::Map<Vector> gb1(g, hidden_);
  g += hidden_;
  Eigen::Map<RowMatrix> gw2(g, hidden_, hidden_);
  g += static_cast<Eigen::Index>(hidden_) * hidden_;
  Eigen::Map<Vector> gb2(g, hidden_);
  g += hidden_;
  Eigen::Map<Vector> gw3(g, hidden_);

  gw3 = act.h2.transpose() * dlogits;
  g[hidden_] = dlogits.sum();
  const Eigen::MatrixXd dh2 = ((dlogits * w3.transpose()).array() * (act.h2.array() > 0.0).cast<double>()).matrix();
  gw2 = dh2.transpose() * act.h1;
  gb2 = dh2.colwise().sum().transpose();
  const Eigen::MatrixXd dh1 = ((dh2 * w2).array() * (act.h1.array() > 0.0).cast<double>()).matrix();
  gw1 = dh1.transpose() * inputs;
  gb1 = dh1.colwise().sum().transpose();

  for (int layer = 0; layer < kLayers; ++layer) {
    if (!frozen_[static_cast<std::size_t>(layer)]) continue;
    const auto [begin, end] = layer_range(layer);
    grad.segment(begin, end - begin).setZero();
  }
  return grad;
}

AdamState AdamState::for_net(const WeightNet& net, double learning_rate) {
  AdamState s;
  s.m = Vector::Zero(net.n_params());
  s.v = Vector::Zero(net.n_params());
  s.learning_rate = learning_rate;
  return s;
}

namespace {

void check_batches(const Eigen::MatrixXd& slow, const Eigen::MatrixXd& fast) {
  if (slow.rows() == 0 || fast.rows() == 0) throw std::invalid_argument("lw_loss: empty batch");
}

}  // namespace

double lw_loss(const WeightNet& net, const FDivergence& fdiv, const Eigen::MatrixXd& slow,
               const Eigen::MatrixXd& fast) {
  check_batches(slow, fast);
  const Vector zs = net.logits(slow);
  const Vector zf = net.logits(fast);
  double slow_term = 0.0;
  for (Eigen::Index i = 0; i < zs.size(); ++i) {
    const double v = fdiv.star_prime_at_logit(zs(i));
    if (std::isinf(v)) throw std::domain_error("lw_loss: f'(w) outside the domain of f*");
    slow_term += v;
  }
  double fast_term = 0.0;
  for (Eigen::Index i = 0; i < zf.size(); ++i) fast_term += fdiv.prime_at_logit(zf(i));
  return slow_term / static_cast<double>(zs.size()) - fast_term / static_cast<double>(zf.size());
}

Vector lw_gradient(const WeightNet& net, const FDivergence& fdiv, const Eigen::MatrixXd& slow,
                   const Eigen::MatrixXd& fast) {
  check_batches(slow, fast);
  const Vector zs = net.logits(slow);
  const Vector zf = net.logits(fast);
  Vector dz_slow(zs.size());
  for (Eigen::Index i = 0; i < zs.size(); ++i)
    dz_slow(i) = fdiv.d_star_prime_at_logit(zs(i)) / static_cast<double>(zs.size());
  Vector dz_fast(zf.size());
  for (Eigen::Index i = 0; i < zf.size(); ++i)
    dz_fast(i) = -fdiv.d_prime_at_logit(zf(i)) / static_cast<double>(zf.size());
  return net.backward(slow, dz_slow) + net.backward(fast, dz_fast);
}

double train_step(WeightNet& net, AdamState& opt, const FDivergence& fdiv, const Eigen::MatrixXd& slow,
                  const Eigen::MatrixXd& fast) {
  const double loss = lw_loss(net, fdiv, slow, fast);
  if (!std::isfinite(loss)) throw NonFiniteError("train_step: non-finite density-ratio loss");
  const Vector grad = lw_gradient(net, fdiv, slow, fast);
  if (!grad.allFinite()) throw NonFiniteError("train_step: non-finite density-ratio gradient");
  if (opt.m.size() != net.n_params() || opt.v.size() != net.n_params())
    throw std::invalid_argument("train_step: optimizer state does not match the network");

  ++opt.step;
  opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad;
  opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  const Vector update =
      (opt.learning_rate * (opt.m.array() / c1) / ((opt.v.array() / c2).sqrt() + opt.epsilon)).matrix();
  net.set_params(net.params() - update);
  return loss;
}

WeightAssignment estimate_ratios(const WeightNet& net, const Eigen::MatrixXd& inputs) {
  return {net.ratios(inputs), Scheme::lfiw};
}

double variational_objective(const FDivergence& fdiv, const Vector& p, const Vector& q, const Vector& w) {
  if (p.size() != q.size() || p.size() != w.size())
    throw std::invalid_argument("variational_objective: size mismatch");
  double value = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(w(i) > 0.0)) throw std::invalid_argument("variational_objective: ratios must be positive");
    const double t = fdiv.f_prime(w(i));
    value += p(i) * t - q(i) * fdiv.f_star(t);
  }
  return value;
}

double exact_divergence(const FDivergence& fdiv, const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw std::invalid_argument("exact_divergence: size mismatch");
  double value = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (q(i) > 0.0) {
      value += q(i) * fdiv.f(p(i) / q(i));
    } else if (p(i) > 0.0) {
      throw std::domain_error("exact_divergence: P is not absolutely continuous with respect to Q");
    }
  }
  return value;
}

void write_params(std::ostream& out, const WeightNet& net) {
  const auto old_precision = out.precision(17);
  out << "weightnet " << net.input_dim() << ' ' << net.hidden() << ' ' << net.n_params() << '\n';
  for (Eigen::Index i = 0; i < net.n_params(); ++i) out << net.params()(i) << '\n';
  out.precision(old_precision);
}

WeightNet read_params(std::istream& in) {
  std::string tag;
  int input_dim = 0;
  int hidden = 0;
  Eigen::Index n = 0;
  if (!(in >> tag >> input_dim >> hidden >> n) || tag != "weightnet")
    throw std::invalid_argument("read_params: bad header");
  WeightNet net(input_dim, hidden, 0);
  if (n != net.n_params()) throw std::invalid_argument("read_params: parameter count does not match the shape");
  Vector params(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(in >> params(i))) throw std::invalid_argument("read_params: truncated parameter vector");
  net.set_params(params);
  return net;
}

void write_loss_trace(std::ostream& out, std::span<const std::pair<long, double>> trace) {
  const auto old_precision = out.precision(17);
  out << "step,loss\n";
  for (const auto& [step, loss] : trace) out << step << ',' << loss << '\n';
  out.precision(old_precision);
}

}  // namespace lfiw
