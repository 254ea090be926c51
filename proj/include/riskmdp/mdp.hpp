#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace riskmdp {

/// Finite MDP with tabular kernel P(y|x,a), rewards r(x,a) in [-1,1] and a
/// finite decision horizon. Immutable after construction.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> kernel;  // [(x * n_actions + a) * n_states + y]
  std::vector<double> reward;  // [x * n_actions + a]
  long horizon = 1;

  double p(int x, int a, int y) const {
    return kernel[static_cast<std::size_t>(x * n_actions + a) * n_states + y];
  }
  double r(int x, int a) const { return reward[static_cast<std::size_t>(x) * n_actions + a]; }
};

/// Per state-action softmax logits, pi(a|x) = exp(theta[x,a]) / sum_b exp(theta[x,b]),
/// with a per-coordinate projection box C = [lo, hi].
struct SoftmaxPolicy {
  Eigen::VectorXd theta;  // length n_states * n_actions
  Eigen::VectorXd lo, hi;

  /// Action probabilities in state x. Shift-invariant and strictly positive.
  Eigen::VectorXd action_probs(int x, int n_actions) const {
    Eigen::VectorXd row = theta.segment(static_cast<Eigen::Index>(x) * n_actions, n_actions);
    double m = row.maxCoeff();
    Eigen::VectorXd e = (row.array() - m).exp();
    return e / e.sum();
  }
};

/// Markov reward process induced by a fixed policy: row-stochastic kernel,
/// policy-averaged state rewards, and the initial state.
struct InducedChain {
  Eigen::MatrixXd p;
  Eigen::VectorXd r;
  int x0 = 0;
};

/// Checks every MDP invariant and reports all violations (never throws).
inline std::vector<std::string> validate_mdp(const TabularMdp& m) {
  std::vector<std::string> out;
  if (m.n_states <= 0) out.push_back("n_states must be positive");
  if (m.n_actions <= 0) out.push_back("n_actions must be positive");
  if (m.horizon <= 0) out.push_back("horizon must be positive");
  if (out.empty() &&
      m.kernel.size() != static_cast<std::size_t>(m.n_states) * m.n_actions * m.n_states)
    out.push_back("kernel has wrong number of entries");
  if (out.empty() && m.reward.size() != static_cast<std::size_t>(m.n_states) * m.n_actions)
    out.push_back("reward has wrong number of entries");
  if (!out.empty()) return out;

  for (int x = 0; x < m.n_states; ++x) {
    for (int a = 0; a < m.n_actions; ++a) {
      double sum = 0.0;
      for (int y = 0; y < m.n_states; ++y) {
        double v = m.p(x, a, y);
        if (v < 0.0)
          out.push_back("kernel(" + std::to_string(x) + "," + std::to_string(a) +
                        ") has negative entry at y=" + std::to_string(y));
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        out.push_back("kernel(" + std::to_string(x) + "," + std::to_string(a) +
                      ") row sums to " + std::to_string(sum));
      double rv = m.r(x, a);
      if (!(rv >= -1.0 && rv <= 1.0))
        out.push_back("reward(" + std::to_string(x) + "," + std::to_string(a) + ") = " +
                      std::to_string(rv) + " outside [-1,1]");
    }
  }
  return out;
}

/// p[x][y] = sum_a pi(a|x) P(y|x,a); r[x] = sum_a pi(a|x) r(x,a).
inline InducedChain induce_chain(const TabularMdp& m, const SoftmaxPolicy& pol, int x0) {
  if (pol.theta.size() != static_cast<Eigen::Index>(m.n_states) * m.n_actions)
    throw std::invalid_argument("induce_chain: policy dimension " +
                                std::to_string(pol.theta.size()) + " does not match MDP (" +
                                std::to_string(m.n_states * m.n_actions) + ")");
  if (x0 < 0 || x0 >= m.n_states) throw std::invalid_argument("induce_chain: x0 out of range");
  InducedChain c;
  c.p.setZero(m.n_states, m.n_states);
  c.r.setZero(m.n_states);
  c.x0 = x0;
  for (int x = 0; x < m.n_states; ++x) {
    Eigen::VectorXd pi = pol.action_probs(x, m.n_actions);
    for (int a = 0; a < m.n_actions; ++a) {
      for (int y = 0; y < m.n_states; ++y) c.p(x, y) += pi(a) * m.p(x, a, y);
      c.r(x) += pi(a) * m.r(x, a);
    }
  }
  return c;
}

struct ErgodicityReport {
  bool irreducible = false;
  bool aperiodic = false;
};

namespace detail {

/// Strongly connected components of the directed graph of positive entries
/// (iterative Kosaraju).
inline std::vector<int> strongly_connected_components(const Eigen::MatrixXd& p, int& n_comp) {
  const int n = static_cast<int>(p.rows());
  std::vector<std::vector<int>> adj(n), radj(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (p(i, j) > 0.0) {
        adj[i].push_back(j);
        radj[j].push_back(i);
      }
  std::vector<int> order;
  order.reserve(n);
  std::vector<char> seen(n, 0);
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<std::pair<int, std::size_t>> stack{{s, 0}};
    seen[s] = 1;
    while (!stack.empty()) {
      auto& [u, idx] = stack.back();
      if (idx < adj[u].size()) {
        int v = adj[u][idx++];
        if (!seen[v]) {
          seen[v] = 1;
          stack.emplace_back(v, 0);
        }
      } else {
        order.push_back(u);
        stack.pop_back();
      }
    }
  }
  std::vector<int> comp(n, -1);
  n_comp = 0;
  for (int k = n - 1; k >= 0; --k) {
    int s = order[k];
    if (comp[s] >= 0) continue;
    std::vector<int> stack{s};
    comp[s] = n_comp;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : radj[u])
        if (comp[v] < 0) {
          comp[v] = n_comp;
          stack.push_back(v);
        }
    }
    ++n_comp;
  }
  return comp;
}

/// Period of one component: gcd of d[u]+1-d[v] over internal edges, with d
/// the BFS level from an arbitrary root.
inline int component_period(const Eigen::MatrixXd& p, const std::vector<int>& comp, int id) {
  const int n = static_cast<int>(p.rows());
  int root = -1;
  for (int i = 0; i < n && root < 0; ++i)
    if (comp[i] == id) root = i;
  std::vector<long> d(n, -1);
  std::vector<int> queue{root};
  d[root] = 0;
  for (std::size_t h = 0; h < queue.size(); ++h) {
    int u = queue[h];
    for (int v = 0; v < n; ++v)
      if (p(u, v) > 0.0 && comp[v] == id && d[v] < 0) {
        d[v] = d[u] + 1;
        queue.push_back(v);
      }
  }
  long g = 0;
  for (int u = 0; u < n; ++u) {
    if (comp[u] != id) continue;
    for (int v = 0; v < n; ++v)
      if (p(u, v) > 0.0 && comp[v] == id) g = std::gcd(g, d[u] + 1 - d[v]);
  }
  return static_cast<int>(g < 0 ? -g : g);
}

}  // namespace detail

/// Graph test on the positive entries of p: strong connectivity and gcd of
/// cycle lengths. When reducible, aperiodicity is reported per closed class.
inline ErgodicityReport check_ergodicity(const InducedChain& c) {
  int n_comp = 0;
  std::vector<int> comp = detail::strongly_connected_components(c.p, n_comp);
  ErgodicityReport rep;
  rep.irreducible = (n_comp == 1);
  rep.aperiodic = true;
  for (int id = 0; id < n_comp; ++id) {
    int period = detail::component_period(c.p, comp, id);
    if (period != 1 && period != 0) rep.aperiodic = false;
  }
  return rep;
}

/// Heuristic for the strongly-nonlattice modeling assumption: true when all
/// reward values lie on a common arithmetic grid (a warning, never an error).
inline bool lattice_reward_suspect(const Eigen::VectorXd& r, double tol = 1e-9) {
  std::vector<double> vals(r.data(), r.data() + r.size());
  std::sort(vals.begin(), vals.end());
  std::vector<double> diffs;
  for (std::size_t i = 1; i < vals.size(); ++i) {
    double d = vals[i] - vals[0];
    if (d > tol) diffs.push_back(d);
  }
  if (diffs.empty()) return true;  // constant reward
  double g = diffs[0];
  for (double d : diffs) {
    double a = g, b = std::fmod(d, g);
    while (b > tol) {
      double t = std::fmod(a, b);
      a = b;
      b = t;
    }
    g = a;
  }
  if (g < tol) return false;
  for (double d : diffs) {
    double k = d / g;
    if (std::abs(k - std::round(k)) > 1e-6) return false;
  }
  return true;
}

}  // namespace riskmdp
