#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "riskmdp/mdp.hpp"
#include "riskmdp/rng.hpp"

namespace fixtures {

using riskmdp::InducedChain;
using riskmdp::TabularMdp;

/// p = [[.9,.1],[.2,.8]], r = (1,-1): stationary (2/3,1/3), tau1 = 0.7.
inline InducedChain fixture_a() {
  InducedChain c;
  c.p.resize(2, 2);
  c.p << 0.9, 0.1, 0.2, 0.8;
  c.r.resize(2);
  c.r << 1.0, -1.0;
  c.x0 = 0;
  return c;
}

/// All rows equal w: an i.i.d. sequence with marginal w.
inline InducedChain rank_one(const Eigen::VectorXd& w, const Eigen::VectorXd& r, int x0 = 0) {
  InducedChain c;
  c.p = Eigen::VectorXd::Ones(w.size()) * w.transpose();
  c.r = r;
  c.x0 = x0;
  return c;
}

inline InducedChain rank_one_pm1() {
  Eigen::VectorXd w(2), r(2);
  w << 0.5, 0.5;
  r << 1.0, -1.0;
  return rank_one(w, r);
}

/// Symmetric two-point chain with odd-symmetric reward: every odd stationary
/// moment vanishes.
inline InducedChain symmetric_two_point(double stay = 0.8, double c0 = 0.6) {
  InducedChain c;
  c.p.resize(2, 2);
  c.p << stay, 1.0 - stay, 1.0 - stay, stay;
  c.r.resize(2);
  c.r << c0, -c0;
  c.x0 = 0;
  return c;
}

/// 3-state doubly stochastic chain: uniform stationary distribution.
inline InducedChain doubly_stochastic_3() {
  InducedChain c;
  c.p.resize(3, 3);
  c.p << 0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.2, 0.5;
  c.r.resize(3);
  c.r << 0.9, -0.2, -0.4;
  c.x0 = 0;
  return c;
}

/// Slow/fast mixing 3-state chain used as a fifth cross-check fixture.
inline InducedChain three_state_skewed() {
  InducedChain c;
  c.p.resize(3, 3);
  c.p << 0.85, 0.10, 0.05, 0.30, 0.60, 0.10, 0.10, 0.25, 0.65;
  c.r.resize(3);
  c.r << 1.0, -0.3, -0.8;
  c.x0 = 0;
  return c;
}

inline std::vector<std::pair<std::string, InducedChain>> cross_check_fixtures() {
  return {{"fixture_a", fixture_a()},
          {"rank_one", rank_one_pm1()},
          {"symmetric_two_point", symmetric_two_point()},
          {"doubly_stochastic_3", doubly_stochastic_3()},
          {"three_state_skewed", three_state_skewed()}};
}

/// Random ergodic chain: strictly positive rows (exponential draws,
/// normalized) and rewards in [-1, 1].
inline InducedChain random_ergodic_chain(int n, riskmdp::RngStream& rng) {
  InducedChain c;
  c.p.resize(n, n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = -std::log(1.0 - rng.uniform01());
      c.p(i, j) = e;
      sum += e;
    }
    c.p.row(i) /= sum;
  }
  c.r.resize(n);
  for (int i = 0; i < n; ++i) c.r(i) = 2.0 * rng.uniform01() - 1.0;
  c.x0 = 0;
  return c;
}

/// Two-state, two-action MDP for the improvement benchmark. Action 0 has the
/// higher mean reward in both states, so the mean-variance optimum saturates
/// at action 0; the 1-d diagonal logit slice reaches the same corner.
inline TabularMdp benchmark_mdp() {
  TabularMdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.horizon = 200;
  m.kernel = {
      // x = 0: action 0 row, action 1 row
      0.9, 0.1, 0.5, 0.5,
      // x = 1
      0.2, 0.8, 0.5, 0.5};
  m.reward = {0.9, -0.5, 0.7, -0.9};
  return m;
}

/// Fixture A': both actions in state 0 given by the two kernels below; the
/// uniform policy averages them to [[.7,.3],[.35,.65]].
inline TabularMdp fixture_a_prime_mdp() {
  TabularMdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.horizon = 100;
  m.kernel = {0.9, 0.1, 0.5, 0.5, 0.2, 0.8, 0.5, 0.5};
  m.reward = {1.0, -1.0, 0.5, -0.5};
  return m;
}

inline riskmdp::SoftmaxPolicy uniform_policy(const TabularMdp& m) {
  riskmdp::SoftmaxPolicy pol;
  const Eigen::Index k1 = static_cast<Eigen::Index>(m.n_states) * m.n_actions;
  pol.theta = Eigen::VectorXd::Zero(k1);
  pol.lo = Eigen::VectorXd::Constant(k1, -20.0);
  pol.hi = Eigen::VectorXd::Constant(k1, 20.0);
  return pol;
}

}  // namespace fixtures
