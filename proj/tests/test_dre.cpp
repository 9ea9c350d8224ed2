#include "lfiw/bench.hpp"
#include "lfiw/dre.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace lfiw;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Cross-entropy of D = sigmoid(z) with fast labelled 1 and slow labelled 0.
double cross_entropy(const Vector& z_slow, const Vector& z_fast) {
  double fast = 0.0, slow = 0.0;
  for (double z : z_fast) fast -= std::log(sigmoid(z));
  for (double z : z_slow) slow -= std::log(1.0 - sigmoid(z));
  return fast / static_cast<double>(z_fast.size()) + slow / static_cast<double>(z_slow.size());
}

Eigen::MatrixXd random_inputs(int n, int d, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * uniform01(rng) - 1.0;
  return x;
}

Eigen::MatrixXd repeat_atoms(const Eigen::MatrixXd& atoms, std::initializer_list<int> counts) {
  int total = 0;
  for (int c : counts) total += c;
  Eigen::MatrixXd out(total, atoms.cols());
  int row = 0, atom = 0;
  for (int c : counts) {
    for (int k = 0; k < c; ++k) out.row(row++) = atoms.row(atom);
    ++atom;
  }
  return out;
}

}  // namespace

TEST_CASE("Jensen-Shannon generator identities") {
  const FDivergence js = jensen_shannon();
  CHECK(js.f(1.0) == doctest::Approx(0.0));
  for (int i = 1; i <= 1000; ++i) {
    const double u = 0.01 * i;
    const double t = js.f_prime(u);
    CHECK(std::isfinite(js.f_star(t)));
    CHECK(std::abs(js.f(u) - (u * t - js.f_star(t))) < 1e-9);
  }
  CHECK(std::isinf(js.f_star(std::log(2.0))));
}

TEST_CASE("stable logit forms match the generic composition") {
  const FDivergence js = jensen_shannon();
  const FDivergence generic =
      FDivergence::from_generator("js-generic", js.f, js.f_prime, js.f_second, js.f_star, js.star_domain_max);
  for (double z = -6.0; z <= 6.0; z += 0.25) {
    CAPTURE(z);
    CHECK(js.prime_at_logit(z) == doctest::Approx(generic.prime_at_logit(z)).epsilon(1e-9));
    CHECK(js.star_prime_at_logit(z) == doctest::Approx(generic.star_prime_at_logit(z)).epsilon(1e-9));
    CHECK(js.d_prime_at_logit(z) == doctest::Approx(generic.d_prime_at_logit(z)).epsilon(1e-9));
    CHECK(js.d_star_prime_at_logit(z) == doctest::Approx(generic.d_star_prime_at_logit(z)).epsilon(1e-9));
    const double h = 1e-5;
    CHECK(js.d_prime_at_logit(z) ==
          doctest::Approx((js.prime_at_logit(z + h) - js.prime_at_logit(z - h)) / (2 * h)).epsilon(1e-6));
    CHECK(js.d_star_prime_at_logit(z) ==
          doctest::Approx((js.star_prime_at_logit(z + h) - js.star_prime_at_logit(z - h)) / (2 * h)).epsilon(1e-6));
  }
  CHECK(std::isfinite(js.star_prime_at_logit(60.0)));
  CHECK(std::isfinite(js.prime_at_logit(-60.0)));
}

TEST_CASE("featurize") {
  Vector expected(5);
  expected << 1, 0, 0, 0, 1;
  CHECK(featurize(0, 1, 3, 2) == expected);
  CHECK(featurize(2, 0, 3, 2).size() == 5);
  CHECK_THROWS_AS(featurize(3, 0, 3, 2), std::out_of_range);
  CHECK_THROWS_AS(featurize(0, -1, 3, 2), std::out_of_range);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int s2 = 0; s2 < 3; ++s2)
        for (int a2 = 0; a2 < 2; ++a2)
          if (s != s2 || a != a2) CHECK(featurize(s, a, 3, 2) != featurize(s2, a2, 3, 2));
  const std::vector<Transition> batch = {{1, 1, 0.0, 0, 0}};
  CHECK(Vector(featurize_batch(batch, 3, 2).row(0).transpose()) == featurize(1, 1, 3, 2));
}

TEST_CASE("zero-output network") {
  const WeightNet net(5, 16, 3, true);
  Rng rng(1);
  const Eigen::MatrixXd x = random_inputs(10, 5, rng);
  CHECK((net.ratios(x).array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK((estimate_ratios(net, x).weights.array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK(lw_loss(net, jensen_shannon(), x, random_inputs(7, 5, rng)) == doctest::Approx(0.0));
}

TEST_CASE("loss equals cross-entropy minus 2 log 2") {
  const FDivergence js = jensen_shannon();
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const WeightNet net(6, 12, trial);
    const Eigen::MatrixXd slow = 3.0 * random_inputs(30, 6, rng), fast = 3.0 * random_inputs(17, 6, rng);
    const double expected = cross_entropy(net.logits(slow), net.logits(fast)) - 2.0 * std::log(2.0);
    CHECK(lw_loss(net, js, slow, fast) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("loss at the true ratio is minus the divergence") {
  const FDivergence js = jensen_shannon();
  const std::vector<std::pair<int, int>> pairs = {{0, 0}, {1, 0}};
  const Eigen::MatrixXd atoms = featurize_pairs(pairs, 2, 1);
  WeightNet net(3, 2, 0);
  // W1 copies the state one-hot, W2 is the identity, w3 holds the log ratios.
  Vector p = Vector::Zero(net.n_params());
  p(0) = 1.0;                            // W1(0, 0)
  p(4) = 1.0;                            // W1(1, 1)
  p(6 + 2 + 0) = 1.0;                    // W2(0, 0)
  p(6 + 2 + 3) = 1.0;                    // W2(1, 1)
  p(6 + 2 + 4 + 2 + 0) = std::log(7.0 / 3.0);
  p(6 + 2 + 4 + 2 + 1) = std::log(3.0 / 7.0);
  net.set_params(p);
  CHECK(net.ratios(atoms)(0) == doctest::Approx(7.0 / 3.0));
  CHECK(net.ratios(atoms)(1) == doctest::Approx(3.0 / 7.0));

  const Eigen::MatrixXd fast = repeat_atoms(atoms, {7, 3}), slow = repeat_atoms(atoms, {3, 7});
  const DistPair pair = two_atom_pair();
  CHECK(lw_loss(net, js, slow, fast) == doctest::Approx(-exact_divergence(js, pair.fast, pair.slow)).epsilon(1e-12));
}

TEST_CASE("gradient matches central differences on a width-8 network") {
  const FDivergence js = jensen_shannon();
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    WeightNet net(5, 8, 100 + trial);
    const Eigen::MatrixXd slow = random_inputs(20, 5, rng), fast = random_inputs(15, 5, rng);
    const Vector grad = lw_gradient(net, js, slow, fast);
    const Vector base = net.params();
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      Vector plus = base, minus = base;
      plus(i) += h;
      minus(i) -= h;
      net.set_params(plus);
      const double lp = lw_loss(net, js, slow, fast);
      net.set_params(minus);
      const double lm = lw_loss(net, js, slow, fast);
      const double fd = (lp - lm) / (2 * h);
      CAPTURE(i);
      CHECK(std::abs(grad(i) - fd) <= 1e-4 * std::max(std::abs(grad(i)), std::abs(fd)) + 1e-9);
    }
    net.set_params(base);
  }
}

TEST_CASE("frozen layers get zero gradient") {
  WeightNet net(4, 8, 1);
  Rng rng(5);
  const Eigen::MatrixXd slow = random_inputs(10, 4, rng), fast = random_inputs(10, 4, rng);
  for (int layer = 0; layer < WeightNet::kLayers; ++layer) {
    net.set_frozen(layer, true);
    const Vector g = lw_gradient(net, jensen_shannon(), slow, fast);
    const auto [begin, end] = net.layer_range(layer);
    CHECK(g.segment(begin, end - begin).cwiseAbs().maxCoeff() == 0.0);
    net.set_frozen(layer, false);
    CHECK(lw_gradient(net, jensen_shannon(), slow, fast).segment(begin, end - begin).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("gradient noise shrinks with batch size when fast and slow agree") {
  const FDivergence js = jensen_shannon();
  const std::vector<std::pair<int, int>> pairs = {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 1}};
  const Eigen::MatrixXd atoms = featurize_pairs(pairs, 3, 2);
  const std::vector<double> dist = {0.1, 0.2, 0.3, 0.1, 0.2, 0.1};
  auto draw = [&](int n, Rng& rng) {
    Eigen::MatrixXd x(n, atoms.cols());
    for (int i = 0; i < n; ++i) x.row(i) = atoms.row(sample_index(dist, rng));
    return x;
  };
  Rng rng(6);
  double small = 0.0, large = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const WeightNet net(5, 16, rep, true);
    small += lw_gradient(net, js, draw(100, rng), draw(100, rng)).norm();
    large += lw_gradient(net, js, draw(10000, rng), draw(10000, rng)).norm();
  }
  CHECK(large < small / 3.0);
}

TEST_CASE("small steps descend on a fixed batch") {
  const FDivergence js = jensen_shannon();
  Rng rng(7);
  const Eigen::MatrixXd slow = random_inputs(64, 6, rng), fast = random_inputs(64, 6, rng) + Eigen::MatrixXd::Constant(64, 6, 0.3);
  int violations = 0;
  for (int init = 0; init < 100; ++init) {
    WeightNet net(6, 16, 1000 + init);
    AdamState opt = AdamState::for_net(net, 1e-4);
    const double before = train_step(net, opt, js, slow, fast);
    if (lw_loss(net, js, slow, fast) > before) ++violations;
  }
  CHECK(violations <= 5);
}

TEST_CASE("training is deterministic") {
  const FDivergence js = jensen_shannon();
  auto run = [&] {
    Rng rng(8);
    WeightNet net(4, 8, 9);
    AdamState opt = AdamState::for_net(net);
    for (int i = 0; i < 50; ++i) train_step(net, opt, js, random_inputs(16, 4, rng), random_inputs(16, 4, rng));
    return net.params();
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite loss aborts the step") {
  WeightNet net(3, 4, 1);
  Vector p = net.params();
  p(0) = NAN;
  net.set_params(p);
  AdamState opt = AdamState::for_net(net);
  Rng rng(1);
  const Eigen::MatrixXd x = random_inputs(4, 3, rng);
  CHECK_THROWS_AS(train_step(net, opt, jensen_shannon(), x, x), NonFiniteError);
  CHECK(opt.step == 0);
  CHECK(std::isnan(net.params()(0)));
}

TEST_CASE("separable samples are classified") {
  const FDivergence js = jensen_shannon();
  const std::vector<std::pair<int, int>> pairs = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  const Eigen::MatrixXd atoms = featurize_pairs(pairs, 4, 1);
  const std::vector<double> fast_dist = {0.5, 0.5, 0.0, 0.0}, slow_dist = {0.0, 0.0, 0.5, 0.5};
  auto draw = [&](const std::vector<double>& dist, int n, Rng& rng) {
    Eigen::MatrixXd x(n, atoms.cols());
    for (int i = 0; i < n; ++i) x.row(i) = atoms.row(sample_index(dist, rng));
    return x;
  };
  Rng rng(10);
  WeightNet net(5, 16, 11);
  AdamState opt = AdamState::for_net(net, 1e-3);
  for (int step = 0; step < 2000; ++step) train_step(net, opt, js, draw(slow_dist, 64, rng), draw(fast_dist, 64, rng));
  const Vector zf = net.logits(draw(fast_dist, 1000, rng)), zs = net.logits(draw(slow_dist, 1000, rng));
  const double accuracy = ((zf.array() > 0).count() + (zs.array() <= 0).count()) / 2000.0;
  CHECK(accuracy > 0.95);
}

TEST_CASE("ratios recover the two-atom pair") {
  DreBenchConfig cfg;
  cfg.steps = 2000;
  const DistPair pair = two_atom_pair();
  const DreBenchResult r = run_dre_bench(pair, cfg);
  CHECK(std::abs(r.estimated_ratio(0) - 7.0 / 3.0) / (7.0 / 3.0) < 0.15);
  CHECK(std::abs(r.estimated_ratio(1) - 3.0 / 7.0) / (3.0 / 7.0) < 0.15);
  CHECK(r.estimated_ratio.minCoeff() > 0.0);
}

TEST_CASE("normalized estimates have mean one over the slow batch") {
  WeightNet net(7, 8, 3);
  Rng rng(12);
  const Eigen::MatrixXd slow = random_inputs(32, 7, rng);
  const WeightAssignment raw = estimate_ratios(net, slow);
  CHECK(raw.weights.minCoeff() > 0.0);
  CHECK(normalize_weights(raw, 5.0).mean() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("variational lower bound is tight only at the true ratio") {
  const FDivergence js = jensen_shannon();
  Rng rng(13);
  for (int inst = 0; inst < 10; ++inst) {
    const int n = 2 + static_cast<int>(rng() % 6);
    const Vector p = random_simplex(n, rng), q = random_simplex(n, rng);
    const Vector truth = (p.array() / q.array()).matrix();
    const double div = exact_divergence(js, p, q);
    CHECK(std::abs(variational_objective(js, p, q, truth) - div) < 1e-9);
    for (int k = 0; k < 100; ++k) {
      Vector w = truth;
      for (Eigen::Index i = 0; i < n; ++i) w(i) *= std::exp(2.0 * (2.0 * uniform01(rng) - 1.0));
      CHECK(variational_objective(js, p, q, w) <= div + 1e-9);
    }
  }
}

TEST_CASE("parameter and loss-trace text formats") {
  WeightNet net(4, 6, 21);
  net.set_frozen(1, true);
  std::stringstream buf;
  write_params(buf, net);
  const WeightNet back = read_params(buf);
  CHECK(back.input_dim() == 4);
  CHECK(back.hidden() == 6);
  CHECK(back.params() == net.params());

  std::istringstream bad("weightnet 4 6 3\n1\n2\n3\n");
  CHECK_THROWS_AS(read_params(bad), std::invalid_argument);

  const std::vector<std::pair<long, double>> trace = {{1, 0.5}, {2, 0.25}};
  std::ostringstream out;
  write_loss_trace(out, trace);
  CHECK(out.str() == "step,loss\n1,0.5\n2,0.25\n");
}
