#include <catch2/catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "riskmdp/chain_analysis.hpp"
#include "riskmdp/simulate.hpp"

using namespace riskmdp;

TEST_CASE("deterministic permutation chain gives the exact orbit sum") {
  InducedChain c;
  c.p.resize(2, 2);
  c.p << 0.0, 1.0, 1.0, 0.0;
  c.r.resize(2);
  c.r << 1.0, -1.0;
  c.x0 = 0;
  SimBatch b5 = simulate(c, 16, 5, 123);
  for (double s : b5.s_values) REQUIRE(s == 1.0);  // +1 -1 +1 -1 +1
  SimBatch b4 = simulate(c, 16, 4, 123);
  for (double s : b4.s_values) REQUIRE(s == 0.0);
}

TEST_CASE("i.i.d. chain: the first reward is the start state's, later draws mix") {
  InducedChain c = fixtures::rank_one_pm1();
  // trajectories start at c.x0, so S_1 is r(x0) deterministically
  SimBatch b1 = simulate(c, 200, 1, 7);
  for (double s : b1.s_values) REQUIRE(s == 1.0);
  // the second draw is i.i.d. from the common row: S_2 - r(x0) in {1,-1},
  // empirical mean vanishing
  SimBatch b2 = simulate(c, 20000, 2, 7);
  double mean = 0.0;
  for (double s : b2.s_values) {
    double draw = s - 1.0;
    REQUIRE((draw == 1.0 || draw == -1.0));
    mean += draw;
  }
  mean /= static_cast<double>(b2.s_values.size());
  REQUIRE(std::abs(mean) < 3.0 / std::sqrt(20000.0));  // 3 SE of a +-1 mean
}

TEST_CASE("fixture A mean rate approaches 1/3") {
  InducedChain c = fixtures::fixture_a();
  SimBatch b = simulate(c, 2000, 10000, 99);
  Cumulants cum = empirical_cumulants(b);
  REQUIRE(std::abs(cum.mean_rate - 1.0 / 3.0) < 3.0 * cum.se_mean);
}

TEST_CASE("empirical quantile follows the right-continuous convention") {
  SimBatch b;
  b.n_traj = 100;
  b.horizon = 1;
  for (int i = 1; i <= 100; ++i) b.s_values.push_back(static_cast<double>(i));
  REQUIRE(empirical_quantile(b, 0.3) == 31.0);
  REQUIRE(empirical_quantile(b, 0.999) == 100.0);
  RiskSpec var{RiskSpec::Kind::value_at_risk, 0.3};
  REQUIRE(empirical_risk(b, var) == -31.0);
}

TEST_CASE("degenerate batch: quantile at the common value, zero variance term") {
  SimBatch b;
  b.n_traj = 50;
  b.horizon = 10;
  b.s_values.assign(50, 4.2);
  REQUIRE(empirical_quantile(b, 0.3) == 4.2);
  RiskSpec mv{RiskSpec::Kind::mean_variance, 3.0};
  REQUIRE(empirical_risk(b, mv) == Catch::Approx(-0.42).margin(1e-12));
}

TEST_CASE("cumulant rates on an i.i.d. chain match the exact finite-T moments") {
  Eigen::VectorXd w(2), r(2);
  w << 0.6, 0.4;
  r << 1.0, -1.0;
  InducedChain c = fixtures::rank_one(w, r);
  const long T = 50;
  // exact finite-T cumulants from the moment recursion (the fixed start state
  // contributes a deterministic first reward)
  oracles::ExactCumulants exact = oracles::exact_cumulants(c.p, c.r, c.x0, T);
  SimBatch b = simulate(c, 100000, T, 31);
  Cumulants cum = empirical_cumulants(b);
  REQUIRE(std::abs(cum.mean_rate - exact.mean / T) < 3.0 * cum.se_mean);
  REQUIRE(std::abs(cum.var_rate - exact.var / T) < 3.0 * cum.se_var);
  REQUIRE(std::abs(cum.k3_rate - exact.k3 / T) < 3.0 * cum.se_k3);
  // and the rates approach the marginal cumulants up to the O(1/T) start bias
  double marginal_var = 0.6 * std::pow(1.0 - 0.2, 2) + 0.4 * std::pow(-1.0 - 0.2, 2);
  REQUIRE(std::abs(exact.var / T - marginal_var) < 2.0 / T);
}

TEST_CASE("odd-symmetric reward gives a vanishing third-cumulant rate") {
  InducedChain c = fixtures::symmetric_two_point();
  SimBatch b = simulate(c, 20000, 2000, 55);
  Cumulants cum = empirical_cumulants(b);
  REQUIRE(std::abs(cum.k3_rate) < 3.0 * cum.se_k3);
}

TEST_CASE("batch is identical across thread counts and reruns") {
  InducedChain c = fixtures::fixture_a();
  SimBatch b1 = simulate(c, 777, 500, 2024, 1);
  SimBatch b2 = simulate(c, 777, 500, 2024, 2);
  SimBatch b3 = simulate(c, 777, 500, 2024, 4);
  SimBatch b4 = simulate(c, 777, 500, 2024, 2);
  REQUIRE(b1.s_values == b2.s_values);
  REQUIRE(b1.s_values == b3.s_values);
  REQUIRE(b2.s_values == b4.s_values);
  SimBatch other = simulate(c, 777, 500, 2025, 2);
  REQUIRE(b1.s_values != other.s_values);
  // rewards in [-1,1] bound every realized sum by the horizon
  for (double s : b1.s_values) {
    REQUIRE(s >= -500.0);
    REQUIRE(s <= 500.0);
  }
}

TEST_CASE("empirical mean-variance risk matches the expansion pipeline") {
  InducedChain c = fixtures::fixture_a();
  ChainSolution sol = analyze_chain(c);
  RiskSpec mv{RiskSpec::Kind::mean_variance, 1.0};
  double analytic = -sol.mean + mv.lambda * sol.sigma2;
  SimBatch b = simulate(c, 4000, 20000, 616);
  Cumulants cum = empirical_cumulants(b);
  double band = 3.0 * (cum.se_mean + mv.lambda * cum.se_var);
  // the start-state transient contributes O(1/T) on top of the MC band
  REQUIRE(std::abs(empirical_risk(b, mv) - analytic) < band + 20.0 / 20000.0);
}

TEST_CASE("jackknife standard errors are finite and scale sensibly") {
  InducedChain c = fixtures::fixture_a();
  SimBatch small = simulate(c, 400, 200, 1);
  SimBatch big = simulate(c, 6400, 200, 1);
  Cumulants cs = empirical_cumulants(small), cb = empirical_cumulants(big);
  REQUIRE(std::isfinite(cs.se_var));
  REQUIRE(std::isfinite(cs.se_k3));
  // 16x the sample should shrink the SE by about 4; allow wide slack
  REQUIRE(cb.se_var < cs.se_var);
  REQUIRE(cb.se_k3 < cs.se_k3);
}

TEST_CASE("normalized empirical CDF approaches the expansion (light version)") {
  InducedChain c = fixtures::fixture_a();
  ChainSolution sol = analyze_chain(c);
  long T = 200;
  SimBatch b = simulate(c, 50000, T, 12);
  double st = std::sqrt(sol.sigma2 * static_cast<double>(T));
  std::vector<double> z = b.s_values;
  for (double& v : z) v = (v - T * sol.mean) / st;
  std::sort(z.begin(), z.end());
  EdgeworthCdf e(sol.mean, std::sqrt(sol.sigma2), sol.varrho, sol.rhat(c.x0), T);
  double d_edge = oracles::ks_distance(z, [&](double y) { return edgeworth_cdf(e, y); });
  double d_norm = oracles::ks_distance(z, [](double y) { return normal_cdf(y); });
  double mc_err = std::sqrt(std::log(2.0 / 0.05) / (2.0 * 50000.0));
  REQUIRE(d_edge <= d_norm + 2.0 * mc_err);
}
