#include "lfiw/bellman.hpp"
#include "lfiw/mdp.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace lfiw;

namespace {

// Independent oracle: truncated sum of gamma^t d_t with explicit loops.
Table power_iteration_occupancy(const TabularMdp& mdp, const Policy& pi, int horizon) {
  const int S = mdp.n_states(), A = mdp.n_actions();
  Table d(S, A), total = Table::Zero(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) d(s, a) = mdp.initial_dist()(s) * pi(s, a);
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    total += discount * d;
    Table next = Table::Zero(S, A);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        for (int s2 = 0; s2 < S; ++s2)
          for (int a2 = 0; a2 < A; ++a2) next(s2, a2) += d(s, a) * mdp.transition(s, a, s2) * pi(s2, a2);
    d = next;
    discount *= mdp.gamma();
  }
  return total;
}

TabularMdp single_state(double gamma, double reward) {
  return TabularMdp(1, 1, Table::Ones(1, 1), Table::Constant(1, 1, reward), gamma, Vector::Ones(1));
}

}  // namespace

TEST_CASE("mdp validation rejects malformed inputs") {
  Table p = Table::Ones(1, 1);
  CHECK_THROWS_AS(TabularMdp(1, 1, p, Table::Zero(1, 1), 1.0, Vector::Ones(1)), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, p, Table::Zero(1, 1), -0.1, Vector::Ones(1)), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, Table::Constant(1, 1, 0.9), Table::Zero(1, 1), 0.5, Vector::Ones(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, p, Table::Zero(1, 1), 0.5, Vector::Constant(1, 0.5)), std::invalid_argument);
  Table neg(1, 2);
  neg << 1.5, -0.5;
  Vector neg_p0(2);
  neg_p0 << 1.5, -0.5;
  CHECK_THROWS_AS(TabularMdp(2, 1, Table::Constant(2, 2, 0.5), Table::Zero(2, 1), 0.5, neg_p0), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(2, 1, neg.replicate(2, 1), Table::Zero(2, 1), 0.5, Vector::Constant(2, 0.5)),
                  std::invalid_argument);
  CHECK_THROWS_AS(Policy{neg}, std::invalid_argument);
}

TEST_CASE("chain construction") {
  CHECK_THROWS_AS(build_chain_mdp(1, 0.5, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(build_chain_mdp(5, 1.5, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(build_chain_mdp(5, -0.1, 0.9), std::invalid_argument);

  const ChainProblem c = build_chain_mdp(5, 0.8, 0.99);
  CHECK(c.mdp.n_states() == 5);
  CHECK(c.mdp.n_actions() == 2);
  for (int s = 0; s < 5; ++s) {
    CHECK(c.policy(s, 0) == doctest::Approx(0.8));
    CHECK(c.mdp.transition(s, 0, std::min(s + 1, 4)) == 1.0);
    CHECK(c.mdp.transition(s, 1, std::max(s - 1, 0)) == 1.0);
  }
  CHECK(c.mdp.reward()(3, 0) == 1.0);
  CHECK(c.mdp.reward()(4, 0) == 1.0);
  CHECK(c.mdp.reward()(4, 1) == 0.0);
  CHECK(c.mdp.reward()(0, 1) == 0.0);
  CHECK(c.mdp.initial_dist()(0) == 1.0);

  const ChainProblem mirror = build_chain_mdp(5, 0.2, 0.99);
  CHECK(mirror.policy(2, 0) == doctest::Approx(0.2));
}

TEST_CASE("two-state chain with p_right = 1") {
  const ChainProblem c = build_chain_mdp(2, 1.0, 0.9);
  const QTable q = exact_q(c.mdp, c.policy);
  CHECK(q(1, 0) == doctest::Approx(10.0));
  CHECK(q(0, 0) == doctest::Approx(1.0 + 0.9 * q(1, 0)));
}

TEST_CASE("gridworld structure") {
  const TabularMdp g = build_gridworld();
  CHECK(g.n_states() == 25);
  CHECK(g.n_actions() == 4);
  CHECK(g.initial_dist()(0) == 1.0);
  for (int a = 0; a < 4; ++a) {
    CHECK(g.transition(24, a, 24) == 1.0);
    CHECK(g.reward()(24, a) == 1.0);
  }
  // right from the start cell: 0.9 intended + 0.1/4 slip right, 0.1/4 each up/left stay, down
  CHECK(g.transition(0, 1, 1) == doctest::Approx(0.9 + 0.025));
  CHECK(g.transition(0, 1, 0) == doctest::Approx(0.05));
  CHECK(g.transition(0, 1, 5) == doctest::Approx(0.025));
}

TEST_CASE("occupancy closed forms") {
  SUBCASE("gamma = 0 leaves only the initial term") {
    Rng rng(3);
    const TabularMdp mdp = random_mdp(4, 3, 0.0, rng);
    const Policy pi = random_policy(4, 3, rng);
    const Occupancy occ = occupancy(mdp, pi);
    for (int s = 0; s < 4; ++s)
      for (int a = 0; a < 3; ++a) CHECK(occ.unnormalized(s, a) == doctest::Approx(mdp.initial_dist()(s) * pi(s, a)));
  }
  SUBCASE("single state, gamma 0.5") {
    const TabularMdp mdp = single_state(0.5, 0.0);
    CHECK(occupancy(mdp, Policy::uniform(1, 1)).unnormalized(0, 0) == doctest::Approx(2.0));
  }
}

TEST_CASE("chain occupancy matches power iteration") {
  const ChainProblem c = build_chain_mdp(5, 0.8, 0.99);
  const Occupancy occ = occupancy(c.mdp, c.policy);
  const Table oracle = power_iteration_occupancy(c.mdp, c.policy, 5000);
  CHECK((occ.unnormalized - oracle).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("occupancy properties on random MDPs") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int S = 1 + static_cast<int>(rng() % 10);
    const int A = 1 + static_cast<int>(rng() % 4);
    const double gamma = 0.9 * uniform01(rng);
    const TabularMdp mdp = random_mdp(S, A, gamma, rng);
    const Policy pi = random_policy(S, A, rng);
    const Occupancy occ = occupancy(mdp, pi);
    CAPTURE(trial);
    CHECK(occ.unnormalized.sum() == doctest::Approx(1.0 / (1.0 - gamma)).epsilon(1e-6));
    CHECK(occ.normalized.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(occ.normalized.minCoeff() >= 0.0);
    CHECK(((1.0 - gamma) * occ.unnormalized - occ.normalized).cwiseAbs().maxCoeff() < 1e-12);
    const Table fixed = (1.0 - gamma) * initial_pair_mass(mdp, pi) + gamma * propagate(mdp, pi, occ.normalized);
    CHECK((fixed - occ.normalized).cwiseAbs().maxCoeff() < 1e-8);
    const int horizon = static_cast<int>(std::ceil(std::log(1e-10) / std::log(std::max(gamma, 1e-3))));
    CHECK((power_iteration_occupancy(mdp, pi, horizon) - occ.unnormalized).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("exact_q closed forms") {
  Rng rng(5);
  const TabularMdp mdp = random_mdp(3, 2, 0.0, rng);
  const Policy pi = random_policy(3, 2, rng);
  CHECK((exact_q(mdp, pi).values - mdp.reward()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(exact_q(single_state(0.9, 1.0), Policy::uniform(1, 1))(0, 0) == doctest::Approx(10.0));
}

TEST_CASE("exact_q is a Bellman fixed point on random MDPs") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int S = 1 + static_cast<int>(rng() % 8);
    const int A = 1 + static_cast<int>(rng() % 4);
    const TabularMdp mdp = random_mdp(S, A, 0.99 * uniform01(rng), rng);
    const Policy pi = random_policy(S, A, rng);
    const QTable q = exact_q(mdp, pi);
    CHECK((bellman_backup(mdp, pi, q).values - q.values).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("chain exact_q agrees with Monte-Carlo returns") {
  const ChainProblem c = build_chain_mdp(5, 0.8, 0.99);
  const QTable q = exact_q(c.mdp, c.policy);
  const int horizon = static_cast<int>(std::ceil(std::log(1e-8) / std::log(0.99)));
  const int n_samples = 10000;
  Rng rng(2024);
  std::bernoulli_distribution right(0.8);
  for (int s0 = 0; s0 < 5; ++s0)
    for (int a0 = 0; a0 < 2; ++a0) {
      double sum = 0.0, sum_sq = 0.0;
      for (int n = 0; n < n_samples; ++n) {
        int s = s0, a = a0;
        double ret = 0.0, discount = 1.0;
        for (int t = 0; t < horizon; ++t) {
          const int next = a == 0 ? std::min(s + 1, 4) : std::max(s - 1, 0);
          if (next == 4) ret += discount;
          discount *= 0.99;
          s = next;
          a = right(rng) ? 0 : 1;
        }
        sum += ret;
        sum_sq += ret * ret;
      }
      const double mean = sum / n_samples;
      const double se = std::sqrt((sum_sq / n_samples - mean * mean) / (n_samples - 1));
      CAPTURE(s0);
      CAPTURE(a0);
      CHECK(std::abs(mean - q(s0, a0)) < 3.0 * se);
    }
}

TEST_CASE("value and advantage") {
  SUBCASE("uniform policy, constant Q") {
    Rng rng(1);
    const TabularMdp mdp = random_mdp(3, 4, 0.9, rng);
    const ValueAdvantage va = value_and_advantage(mdp, Policy::uniform(3, 4), QTable{Table::Constant(3, 4, 2.5)});
    CHECK((va.value.array() - 2.5).abs().maxCoeff() < 1e-12);
    CHECK(va.advantage.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("deterministic policy picks its action") {
    Rng rng(2);
    const TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
    Table probs(3, 2);
    probs << 1, 0, 0, 1, 1, 0;
    const QTable q{Table::Random(3, 2)};
    const ValueAdvantage va = value_and_advantage(mdp, Policy(probs), q);
    CHECK(va.value(0) == q(0, 0));
    CHECK(va.value(1) == q(1, 1));
    CHECK(va.value(2) == q(2, 0));
  }
  SUBCASE("advantage is centered under the policy") {
    const ChainProblem c = build_chain_mdp(5, 0.8, 0.99);
    const ValueAdvantage va = value_and_advantage(c.mdp, c.policy, exact_q(c.mdp, c.policy));
    const Vector centered = (c.policy.probs().array() * va.advantage.array()).rowwise().sum();
    CHECK(centered.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("stationary distribution is invariant") {
  const ChainProblem c = build_chain_mdp(5, 0.8, 0.99);
  const Table d = stationary_distribution(c.mdp, c.policy);
  CHECK(d.sum() == doctest::Approx(1.0));
  CHECK((propagate(c.mdp, c.policy, d) - d).cwiseAbs().maxCoeff() < 1e-12);

  // two disconnected absorbing states have many invariant distributions
  Table p = Table::Zero(2, 2);
  p(0, 0) = 1.0;
  p(1, 1) = 1.0;
  const TabularMdp split(2, 1, p, Table::Zero(2, 1), 0.9, Vector::Constant(2, 0.5));
  CHECK_THROWS_AS(stationary_distribution(split, Policy::uniform(2, 1)), std::domain_error);
}

TEST_CASE("mdp text round trip") {
  Rng rng(9);
  const TabularMdp mdp = random_mdp(3, 2, 0.75, rng);
  std::stringstream buf;
  buf.precision(17);
  write_mdp(buf, mdp);
  const TabularMdp back = read_mdp(buf);
  CHECK(back.n_states() == 3);
  CHECK(back.n_actions() == 2);
  CHECK(back.gamma() == 0.75);
  CHECK(back.transition() == mdp.transition());
  CHECK(back.reward() == mdp.reward());
  CHECK(back.initial_dist() == mdp.initial_dist());

  std::istringstream truncated("2 1 0.5\n1 0\n");
  CHECK_THROWS_AS(read_mdp(truncated), std::invalid_argument);
  std::istringstream commented("# tiny\n1 1 0.5\n1\n\n# reward\n3\n1\n");
  CHECK(read_mdp(commented).reward()(0, 0) == 3.0);
}
