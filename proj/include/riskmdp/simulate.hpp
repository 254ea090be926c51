#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "riskmdp/edgeworth.hpp"
#include "riskmdp/mdp.hpp"
#include "riskmdp/rng.hpp"

namespace riskmdp {

/// Realized cumulative rewards S_T over a batch of independent trajectories.
/// Reproducible: the per-trajectory stream is derived from (seed, index), so
/// the same inputs give identical s_values on any thread count.
struct SimBatch {
  long n_traj = 0;
  long horizon = 0;
  std::uint64_t seed = 0;
  std::vector<double> s_values;
};

namespace detail {

/// Row-wise cumulative kernel for categorical sampling.
struct RowSampler {
  std::vector<double> cum;
  int n;
  explicit RowSampler(const Eigen::MatrixXd& p) : n(static_cast<int>(p.rows())) {
    cum.resize(static_cast<std::size_t>(n) * n);
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int y = 0; y < n; ++y) {
        acc += p(x, y);
        cum[static_cast<std::size_t>(x) * n + y] = acc;
      }
      cum[static_cast<std::size_t>(x) * n + (n - 1)] = 1.0;
    }
  }
  int step(int x, double u) const {
    const double* row = cum.data() + static_cast<std::size_t>(x) * n;
    int y = 0;
    while (u >= row[y] && y + 1 < n) ++y;
    return y;
  }
};

}  // namespace detail

/// One trajectory of states (length n_steps + 1, starting at c.x0).
inline std::vector<int> simulate_trajectory(const InducedChain& c, long n_steps,
                                            std::uint64_t seed) {
  detail::RowSampler sampler(c.p);
  RngStream rng = derive_stream(seed);
  std::vector<int> states;
  states.reserve(static_cast<std::size_t>(n_steps) + 1);
  int x = c.x0;
  states.push_back(x);
  for (long t = 0; t < n_steps; ++t) {
    x = sampler.step(x, rng.uniform01());
    states.push_back(x);
  }
  return states;
}

/// S_T = sum_{t=0}^{T-1} r(x_t) over n_traj independent trajectories.
inline SimBatch simulate(const InducedChain& c, long n_traj, long horizon, std::uint64_t seed,
                         int n_threads = 0) {
  if (n_traj < 1 || horizon < 1) throw std::invalid_argument("simulate: n_traj and T must be >= 1");
  SimBatch batch;
  batch.n_traj = n_traj;
  batch.horizon = horizon;
  batch.seed = seed;
  batch.s_values.assign(static_cast<std::size_t>(n_traj), 0.0);

  detail::RowSampler sampler(c.p);
  const std::vector<double> rv(c.r.data(), c.r.data() + c.r.size());
  auto run_range = [&](long begin, long end) {
    for (long i = begin; i < end; ++i) {
      RngStream rng = derive_stream(seed, static_cast<std::uint64_t>(i));
      int x = c.x0;
      double s = 0.0;
      for (long t = 0; t < horizon; ++t) {
        s += rv[static_cast<std::size_t>(x)];
        x = sampler.step(x, rng.uniform01());
      }
      batch.s_values[static_cast<std::size_t>(i)] = s;
    }
  };

  int hw = n_threads > 0 ? n_threads
                         : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  hw = static_cast<int>(std::min<long>(hw, n_traj));
  if (hw <= 1) {
    run_range(0, n_traj);
  } else {
    std::vector<std::thread> pool;
    long chunk = (n_traj + hw - 1) / hw;
    for (int k = 0; k < hw; ++k) {
      long b = k * chunk, e = std::min(n_traj, b + chunk);
      if (b >= e) break;
      pool.emplace_back(run_range, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return batch;
}

/// Right-continuous empirical lambda-quantile, inf{y : F_hat(y) > lambda}.
inline double empirical_quantile(const SimBatch& b, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("empirical_quantile: lambda must lie in (0,1)");
  std::vector<double> s = b.s_values;
  std::sort(s.begin(), s.end());
  long n = static_cast<long>(s.size());
  long k = static_cast<long>(std::floor(static_cast<double>(n) * lambda)) + 1;  // 1-based
  k = std::min(k, n);
  return s[static_cast<std::size_t>(k - 1)];
}

/// Sample-cumulant rates of S_T: mean(S)/T, k2(S)/T, k3(S)/T (unbiased
/// k-statistics), with leave-one-out jackknife standard errors.
struct Cumulants {
  double mean_rate = 0.0, var_rate = 0.0, k3_rate = 0.0;
  double se_mean = 0.0, se_var = 0.0, se_k3 = 0.0;
};

inline Cumulants empirical_cumulants(const SimBatch& b) {
  const long n = static_cast<long>(b.s_values.size());
  if (n < 10) throw std::invalid_argument("empirical_cumulants: need at least 10 trajectories");
  const double t = static_cast<double>(b.horizon);
  const double nd = static_cast<double>(n);

  double mean = 0.0;
  for (double v : b.s_values) mean += v;
  mean /= nd;
  double d2 = 0.0, d3 = 0.0;
  for (double v : b.s_values) {
    double d = v - mean;
    d2 += d * d;
    d3 += d * d * d;
  }
  double k2 = d2 / (nd - 1.0);
  double k3 = nd * d3 / ((nd - 1.0) * (nd - 2.0));

  Cumulants out;
  out.mean_rate = mean / t;
  out.var_rate = k2 / t;
  out.k3_rate = k3 / t;
  out.se_mean = std::sqrt(k2 / nd) / t;

  // Leave-one-out k-statistics from the centered power sums, O(n) total.
  const double m = nd - 1.0;
  double s2_var = 0.0, s2_k3 = 0.0;
  double sum_var = 0.0, sum_k3 = 0.0;
  std::vector<double> loo_var(static_cast<std::size_t>(n)), loo_k3(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    double d = b.s_values[static_cast<std::size_t>(i)] - mean;
    double a = d / m;
    double d2p = d2 - d * d - 2.0 * a * d + m * a * a;
    double d3p = d3 - d * d * d + 3.0 * a * (d2 - d * d) - 3.0 * a * a * d + m * a * a * a;
    double k2i = d2p / (m - 1.0);
    double k3i = m * d3p / ((m - 1.0) * (m - 2.0));
    loo_var[static_cast<std::size_t>(i)] = k2i;
    loo_k3[static_cast<std::size_t>(i)] = k3i;
    sum_var += k2i;
    sum_k3 += k3i;
  }
  double mean_var = sum_var / nd, mean_k3 = sum_k3 / nd;
  for (long i = 0; i < n; ++i) {
    double dv = loo_var[static_cast<std::size_t>(i)] - mean_var;
    double dk = loo_k3[static_cast<std::size_t>(i)] - mean_k3;
    s2_var += dv * dv;
    s2_k3 += dk * dk;
  }
  out.se_var = std::sqrt((m / nd) * s2_var) / t;
  out.se_k3 = std::sqrt((m / nd) * s2_k3) / t;
  return out;
}

/// Empirical analogue of the supported risk measures, on the same per-step
/// scale and sign conventions as the expansion-based evaluation.
inline double empirical_risk(const SimBatch& b, const RiskSpec& spec) {
  const long n = static_cast<long>(b.s_values.size());
  if (n < 2) throw std::invalid_argument("empirical_risk: need n_traj >= 2");
  if (spec.kind == RiskSpec::Kind::value_at_risk) return -empirical_quantile(b, spec.lambda);
  const double t = static_cast<double>(b.horizon);
  double mean = 0.0;
  for (double v : b.s_values) mean += v;
  mean /= static_cast<double>(n);
  double d2 = 0.0;
  for (double v : b.s_values) d2 += (v - mean) * (v - mean);
  double k2 = d2 / static_cast<double>(n - 1);
  return -mean / t + spec.lambda * k2 / t;
}

}  // namespace riskmdp
