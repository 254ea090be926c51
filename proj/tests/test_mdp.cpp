#include <catch2/catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "riskmdp/mdp.hpp"
#include "riskmdp/rng.hpp"

using namespace riskmdp;

TEST_CASE("validate_mdp accepts a well-formed MDP") {
  TabularMdp m = fixtures::fixture_a_prime_mdp();
  REQUIRE(validate_mdp(m).empty());
}

TEST_CASE("validate_mdp flags a non-stochastic kernel row") {
  TabularMdp m = fixtures::fixture_a_prime_mdp();
  m.kernel[0] = 0.8;  // (x=0,a=0) row now sums to 0.9
  auto v = validate_mdp(m);
  REQUIRE(v.size() == 1);
  REQUIRE(v[0].find("kernel(0,0)") != std::string::npos);
}

TEST_CASE("validate_mdp flags a reward outside [-1,1]") {
  TabularMdp m = fixtures::fixture_a_prime_mdp();
  m.reward[1] = 1.5;  // (x=0,a=1)
  auto v = validate_mdp(m);
  REQUIRE(v.size() == 1);
  REQUIRE(v[0].find("reward(0,1)") != std::string::npos);
}

TEST_CASE("induce_chain: saturating logits select one action's kernel rows") {
  TabularMdp m = fixtures::fixture_a_prime_mdp();
  SoftmaxPolicy pol = fixtures::uniform_policy(m);
  pol.theta << 20.0, -20.0, 20.0, -20.0;  // action 0 in both states
  InducedChain c = induce_chain(m, pol, 0);
  REQUIRE(std::abs(c.p(0, 0) - 0.9) < 1e-8);
  REQUIRE(std::abs(c.p(0, 1) - 0.1) < 1e-8);
  REQUIRE(std::abs(c.p(1, 0) - 0.2) < 1e-8);
  REQUIRE(std::abs(c.p(1, 1) - 0.8) < 1e-8);
  REQUIRE(std::abs(c.r(0) - 1.0) < 1e-8);
}

TEST_CASE("induce_chain: identical action kernels are a fixed point of averaging") {
  TabularMdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.horizon = 10;
  m.kernel = {0.3, 0.7, 0.3, 0.7, 0.6, 0.4, 0.6, 0.4};
  m.reward = {0.1, 0.9, -0.2, 0.4};
  SoftmaxPolicy pol = fixtures::uniform_policy(m);
  InducedChain c = induce_chain(m, pol, 0);
  REQUIRE(c.p(0, 0) == Catch::Approx(0.3).margin(1e-15));
  REQUIRE(c.p(1, 0) == Catch::Approx(0.6).margin(1e-15));
}

TEST_CASE("induce_chain: uniform policy on fixture A' averages the kernels by hand") {
  TabularMdp m = fixtures::fixture_a_prime_mdp();
  SoftmaxPolicy pol = fixtures::uniform_policy(m);
  InducedChain c = induce_chain(m, pol, 0);
  // hand-average of [[.9,.1],[.2,.8]] and [[.5,.5],[.5,.5]]
  REQUIRE(c.p(0, 0) == Catch::Approx(0.70).margin(1e-12));
  REQUIRE(c.p(0, 1) == Catch::Approx(0.30).margin(1e-12));
  REQUIRE(c.p(1, 0) == Catch::Approx(0.35).margin(1e-12));
  REQUIRE(c.p(1, 1) == Catch::Approx(0.65).margin(1e-12));
}

TEST_CASE("induce_chain rejects a mismatched policy dimension") {
  TabularMdp m = fixtures::fixture_a_prime_mdp();
  SoftmaxPolicy pol = fixtures::uniform_policy(m);
  pol.theta = Eigen::VectorXd::Zero(3);
  REQUIRE_THROWS_AS(induce_chain(m, pol, 0), std::invalid_argument);
}

TEST_CASE("check_ergodicity on the three canonical cases") {
  InducedChain c = fixtures::fixture_a();
  auto rep = check_ergodicity(c);
  REQUIRE(rep.irreducible);
  REQUIRE(rep.aperiodic);

  c.p << 0.0, 1.0, 1.0, 0.0;
  rep = check_ergodicity(c);
  REQUIRE(rep.irreducible);
  REQUIRE_FALSE(rep.aperiodic);

  c.p << 1.0, 0.0, 0.0, 1.0;
  rep = check_ergodicity(c);
  REQUIRE_FALSE(rep.irreducible);
  REQUIRE(rep.aperiodic);  // each closed class is aperiodic
}

TEST_CASE("induced kernel is row-stochastic for random theta in bounds") {
  RngStream rng = derive_stream(20240811);
  TabularMdp m = fixtures::benchmark_mdp();
  SoftmaxPolicy pol = fixtures::uniform_policy(m);
  for (int trial = 0; trial < 60; ++trial) {
    for (Eigen::Index i = 0; i < pol.theta.size(); ++i)
      pol.theta(i) = -20.0 + 40.0 * rng.uniform01();
    InducedChain c = induce_chain(m, pol, 0);
    for (int x = 0; x < m.n_states; ++x) {
      REQUIRE(c.p.row(x).sum() == Catch::Approx(1.0).margin(1e-12));
      REQUIRE(c.p.row(x).minCoeff() >= 0.0);
      REQUIRE(c.r(x) >= -1.0);
      REQUIRE(c.r(x) <= 1.0);
    }
  }
}

TEST_CASE("softmax is invariant under per-state logit shifts") {
  RngStream rng = derive_stream(77);
  TabularMdp m = fixtures::benchmark_mdp();
  SoftmaxPolicy pol = fixtures::uniform_policy(m);
  for (int trial = 0; trial < 20; ++trial) {
    for (Eigen::Index i = 0; i < pol.theta.size(); ++i) pol.theta(i) = 6.0 * rng.uniform01() - 3.0;
    InducedChain c1 = induce_chain(m, pol, 0);
    SoftmaxPolicy shifted = pol;
    for (int x = 0; x < m.n_states; ++x) {
      double shift = 4.0 * rng.uniform01() - 2.0;
      for (int a = 0; a < m.n_actions; ++a) shifted.theta(x * m.n_actions + a) += shift;
    }
    InducedChain c2 = induce_chain(m, shifted, 0);
    REQUIRE((c1.p - c2.p).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((c1.r - c2.r).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("induced kernel entries stay between per-action extremes") {
  RngStream rng = derive_stream(31337);
  TabularMdp m = fixtures::benchmark_mdp();
  SoftmaxPolicy pol = fixtures::uniform_policy(m);
  for (int trial = 0; trial < 40; ++trial) {
    for (Eigen::Index i = 0; i < pol.theta.size(); ++i)
      pol.theta(i) = -20.0 + 40.0 * rng.uniform01();
    InducedChain c = induce_chain(m, pol, 0);
    for (int x = 0; x < m.n_states; ++x)
      for (int y = 0; y < m.n_states; ++y) {
        double lo = 1e300, hi = -1e300;
        for (int a = 0; a < m.n_actions; ++a) {
          lo = std::min(lo, m.p(x, a, y));
          hi = std::max(hi, m.p(x, a, y));
        }
        REQUIRE(c.p(x, y) >= lo - 1e-12);
        REQUIRE(c.p(x, y) <= hi + 1e-12);
      }
  }
}

TEST_CASE("lattice-reward heuristic") {
  Eigen::VectorXd r(2);
  r << 1.0, -1.0;
  REQUIRE(lattice_reward_suspect(r));  // grid of span 2

  Eigen::VectorXd c1 = Eigen::VectorXd::Constant(3, 0.4);
  REQUIRE(lattice_reward_suspect(c1));  // constant

  Eigen::VectorXd r2(3);
  r2 << 0.0, 0.31830988618367, 0.5;  // 1/pi is not commensurable with 0.5
  REQUIRE_FALSE(lattice_reward_suspect(r2));
}
