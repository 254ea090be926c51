#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "riskmdp/chain_analysis.hpp"
#include "riskmdp/normal.hpp"

namespace riskmdp {

struct BracketError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The expansion is not a true CDF for extreme parameters; quantile queries
/// refuse to invert a locally decreasing curve.
struct MonotonicityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two-term expansion of the distribution of the normalized partial sums:
/// G_T(y) = g(y) + gamma(y)/(sigma sqrt(T)) [varrho/(6 sigma^2) (1-y^2) - rhat(x0)],
/// clamped to [0,1]. The o(T^{-1/2}) remainder is dropped.
struct EdgeworthCdf {
  double mean = 0.0;     // per-step phi
  double sigma = 1.0;    // sqrt of asymptotic variance, > 0
  double varrho = 0.0;
  double rhat_x0 = 0.0;
  long horizon = 1;

  EdgeworthCdf(double mean_, double sigma_, double varrho_, double rhat_x0_, long horizon_)
      : mean(mean_), sigma(sigma_), varrho(varrho_), rhat_x0(rhat_x0_), horizon(horizon_) {
    if (!(sigma > 0.0))
      throw std::invalid_argument("EdgeworthCdf: sigma must be positive (nontrivial variance)");
    if (horizon < 1) throw std::invalid_argument("EdgeworthCdf: horizon must be >= 1");
  }
};

/// G_T at the NORMALIZED coordinate y.
inline double edgeworth_cdf(const EdgeworthCdf& e, double y) {
  double st = e.sigma * std::sqrt(static_cast<double>(e.horizon));
  double v = normal_cdf(y) +
             normal_pdf(y) / st *
                 (e.varrho / (6.0 * e.sigma * e.sigma) * (1.0 - y * y) - e.rhat_x0);
  return std::clamp(v, 0.0, 1.0);
}

/// Normalizing map h(y) = (y - T phi) / (sigma sqrt(T)).
inline double edgeworth_normalize(const EdgeworthCdf& e, double y) {
  double t = static_cast<double>(e.horizon);
  return (y - t * e.mean) / (e.sigma * std::sqrt(t));
}

struct QuantileResult {
  double q_lambda;  // inf{y : G_T(h(y)) > lambda}, the value reported in the text
  double var;       // -q_lambda, the value-at-risk sign convention
};

/// Right-continuous lambda-quantile of the cumulative-reward distribution,
/// found by bisection over [T phi - 10 sigma sqrt(T), T phi + 10 sigma sqrt(T)]
/// to 1e-9 absolute tolerance in y. Monotonicity of the (unclamped) expansion
/// is verified on the bracket before inverting.
inline QuantileResult var_quantile(const EdgeworthCdf& e, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("var_quantile: lambda must lie in (0,1)");
  double t = static_cast<double>(e.horizon);
  double st = e.sigma * std::sqrt(t);
  double lo = t * e.mean - 10.0 * st;
  double hi = t * e.mean + 10.0 * st;

  const int grid = 128;
  double prev = -1.0;
  for (int i = 0; i <= grid; ++i) {
    double y = lo + (hi - lo) * i / grid;
    double v = edgeworth_cdf(e, edgeworth_normalize(e, y));
    if (v < prev - 1e-12)
      throw MonotonicityError(
          "var_quantile: expansion is decreasing near y = " + std::to_string(y) +
          "; the two-term expansion is not a CDF for these parameters");
    prev = v;
  }

  double flo = edgeworth_cdf(e, edgeworth_normalize(e, lo));
  double fhi = edgeworth_cdf(e, edgeworth_normalize(e, hi));
  if (!(flo < lambda && fhi > lambda))
    throw BracketError("var_quantile: G_T does not cross lambda on the search interval (G(lo)=" +
                       std::to_string(flo) + ", G(hi)=" + std::to_string(fhi) + ")");
  while (hi - lo > 1e-9) {
    double mid = 0.5 * (lo + hi);
    if (edgeworth_cdf(e, edgeworth_normalize(e, mid)) > lambda)
      hi = mid;
    else
      lo = mid;
  }
  double q = 0.5 * (lo + hi);
  return {q, -q};
}

/// rho_lambda = -phi(r) + lambda sigma^2.
inline double mean_variance(const ChainSolution& sol, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("mean_variance: lambda must be >= 0");
  return -sol.mean + lambda * sol.sigma2;
}

struct RiskSpec {
  enum class Kind { value_at_risk, mean_variance };
  Kind kind = Kind::mean_variance;
  double lambda = 0.0;
};

inline const char* risk_kind_name(RiskSpec::Kind k) {
  return k == RiskSpec::Kind::value_at_risk ? "value_at_risk" : "mean_variance";
}

/// Risk of the T-step sum under a solved chain. Value-at-risk is returned
/// as -q_lambda (the risk-measure sign convention); the quantile itself is
/// available through var_quantile.
inline double evaluate_risk(const ChainSolution& sol, int x0, const RiskSpec& spec, long t) {
  if (spec.kind == RiskSpec::Kind::mean_variance) return mean_variance(sol, spec.lambda);
  if (!(sol.sigma2 > 0.0))
    throw std::invalid_argument(
        "evaluate_risk: value-at-risk requires a nontrivial asymptotic variance (sigma2 = " +
        std::to_string(sol.sigma2) + ")");
  EdgeworthCdf e(sol.mean, std::sqrt(sol.sigma2), sol.varrho, sol.rhat(x0), t);
  return var_quantile(e, spec.lambda).var;
}

}  // namespace riskmdp
