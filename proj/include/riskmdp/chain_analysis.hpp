#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskmdp/mdp.hpp"

namespace riskmdp {

struct NonErgodicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when H = I - P - Xi (or its estimated counterpart) is numerically
/// singular; carries the offending smallest singular value.
struct SingularOperatorError : std::runtime_error {
  double sigma_min;
  SingularOperatorError(const std::string& what, double smin)
      : std::runtime_error(what), sigma_min(smin) {}
};

struct SeriesDecayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything the distribution expansion needs about one ergodic chain.
struct ChainSolution {
  Eigen::VectorXd xi;    // stationary distribution
  double mean = 0.0;     // phi = xi . r
  Eigen::VectorXd rhat;  // Poisson solution, normalized to xi . rhat = 0
  double sigma2 = 0.0;   // asymptotic variance, clamped to >= 0
  double varrho = 0.0;   // third-order constant
  double tau1 = 0.0;     // Dobrushin ergodicity coefficient
  std::vector<std::string> warnings;
};

struct FundamentalKernel {
  Eigen::MatrixXd z;  // (I - P - Xi)^{-1}
  double sigma_min_h = 0.0;
};

struct PoissonSolution {
  FundamentalKernel kernel;
  Eigen::VectorXd rhat;
};

/// tau1(P) = 1/2 max_{i,j} ||P(i,.) - P(j,.)||_1 (Dobrushin form of the
/// variational definition; exact for row-stochastic matrices).
inline double ergodicity_coefficient(const Eigen::MatrixXd& p) {
  const Eigen::Index n = p.rows();
  double best = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      best = std::max(best, (p.row(i) - p.row(j)).cwiseAbs().sum());
  return 0.5 * best;
}

/// Solves xi^T P = xi^T, sum xi = 1 by replacing one equation of (P^T - I)
/// with the normalization row. The left eigenvector is the distribution; the
/// right one is all-ones and carries no information.
inline Eigen::VectorXd stationary_distribution(const InducedChain& c) {
  const Eigen::Index n = c.p.rows();
  ErgodicityReport rep = check_ergodicity(c);
  if (!rep.irreducible)
    throw NonErgodicError("stationary_distribution: chain is not irreducible (multiple closed classes)");
  Eigen::MatrixXd a = c.p.transpose() - Eigen::MatrixXd::Identity(n, n);
  a.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw NonErgodicError("stationary_distribution: unit eigenvalue is not simple within tolerance");
  Eigen::VectorXd xi = lu.solve(b);
  double resid = (c.p.transpose() * xi - xi).cwiseAbs().maxCoeff();
  if (resid > 1e-10 || xi.minCoeff() < -1e-12)
    throw NonErgodicError("stationary_distribution: solve residual " + std::to_string(resid));
  xi = xi.cwiseMax(0.0);
  xi /= xi.sum();
  return xi;
}

/// rhat = Z (r - phi 1) with Z = (I - P - Xi)^{-1}. This normalization makes
/// xi . rhat = 0, matching the limit definition of the Poisson solution.
inline PoissonSolution solve_poisson(const InducedChain& c, const Eigen::VectorXd& xi,
                                     double mean) {
  const Eigen::Index n = c.p.rows();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n) - c.p;
  h.noalias() -= Eigen::VectorXd::Ones(n) * xi.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double smin = svd.singularValues().minCoeff();
  if (smin < 1e-10)
    throw SingularOperatorError(
        "solve_poisson: H = I - P - Xi is numerically singular, sigma_min = " +
            std::to_string(smin),
        smin);
  Eigen::VectorXd inv_s = svd.singularValues().cwiseInverse();
  PoissonSolution sol;
  sol.kernel.z = svd.matrixV() * inv_s.asDiagonal() * svd.matrixU().transpose();
  sol.kernel.sigma_min_h = smin;
  sol.rhat = sol.kernel.z * (c.r.array() - mean).matrix();
  return sol;
}

/// sigma^2 = sum_x [rhat(x)^2 - (P rhat)(x)^2] xi(x), clamped to >= 0.
inline double asymptotic_variance(const InducedChain& c, const Eigen::VectorXd& xi,
                                  const Eigen::VectorXd& rhat) {
  Eigen::VectorXd prhat = c.p * rhat;
  double s = ((rhat.array().square() - prhat.array().square()) * xi.array()).sum();
  return std::max(s, 0.0);
}

namespace detail {

/// Number of matrix-power terms before the geometric envelope
/// ||P^k - 1 xi^T||_inf is declared non-decaying. The 10|X|/(1-tau1) budget
/// alone undershoots the tau1-predicted horizon on small chains at tight
/// tolerances, so take the larger of the two.
inline long truncation_cap(Eigen::Index n, double tau1, double tol) {
  double denom = std::max(1.0 - tau1, 0.05 / static_cast<double>(n));
  double cap = 10.0 * static_cast<double>(n) / denom;
  if (tau1 > 1e-12 && tau1 < 1.0) {
    double predicted = std::log(std::max(tol, 1e-300) / 2.0) / std::log(tau1);
    cap = std::max(cap, 1.2 * predicted + 8.0);
  }
  return static_cast<long>(std::ceil(cap));
}

/// Iterates P^k for k = 1.. until the envelope drops below tol, invoking
/// visit(P^k) for every term. Throws when the cap is hit first.
template <typename Visitor>
inline void for_each_power(const Eigen::MatrixXd& p, const Eigen::VectorXd& xi, double tol,
                           const char* who, Visitor&& visit) {
  const Eigen::Index n = p.rows();
  const Eigen::MatrixXd limit = Eigen::VectorXd::Ones(n) * xi.transpose();
  const long cap = truncation_cap(n, ergodicity_coefficient(p), tol);
  Eigen::MatrixXd pk = p;
  double envelope = 0.0;
  for (long k = 1; k <= cap; ++k) {
    visit(pk);
    envelope = (pk - limit).cwiseAbs().rowwise().sum().maxCoeff();
    if (envelope < tol) return;
    pk = pk * p;
  }
  throw SeriesDecayError(std::string(who) +
                         ": power envelope failed to decay below tol, achieved " +
                         std::to_string(envelope) + " after " + std::to_string(cap) + " terms");
}

/// Autocovariance form of the asymptotic variance with arbitrary (P, xi)
/// substitutions, shared by the exact and estimated pipelines.
inline double variance_series_impl(const Eigen::MatrixXd& p, const Eigen::VectorXd& r,
                                   const Eigen::VectorXd& xi, double mean, double tol) {
  Eigen::VectorXd rbar = r.array() - mean;
  double acc = (rbar.array().square() * xi.array()).sum();
  for_each_power(p, xi, tol, "asymptotic_variance_series", [&](const Eigen::MatrixXd& pk) {
    acc += 2.0 * (xi.array() * rbar.array() * (pk * rbar).array()).sum();
  });
  return acc;
}

/// Third-order constant: stationary third moment, lagged square-linear cross
/// terms in both time directions, and the double-lag triple terms. Negative
/// lags run through the time-reversed kernel P*(x,y) = xi(y) P(y,x) / xi(x).
/// xi_envelope is the limit distribution of P^k used by the truncation rule;
/// it equals xi on exact chains but must be P's own stationary point when a
/// finite-power xi substitutes for it, or the envelope never decays.
inline double varrho_impl(const Eigen::MatrixXd& p, const Eigen::VectorXd& r,
                          const Eigen::VectorXd& xi, double mean, double tol, bool centered,
                          const Eigen::VectorXd* xi_envelope = nullptr) {
  const Eigen::Index n = p.rows();
  const Eigen::VectorXd& xi_env = xi_envelope ? *xi_envelope : xi;
  Eigen::VectorXd rb = centered ? Eigen::VectorXd(r.array() - mean) : r;

  // Time reversal is taken with respect to P's own stationary law (xi_env);
  // the reversal of a non-stationary weighting is not a transition kernel and
  // its powers need not stay bounded.
  Eigen::MatrixXd prev(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    if (xi_env(x) > 0.0) {
      for (Eigen::Index y = 0; y < n; ++y) prev(x, y) = xi_env(y) * p(y, x) / xi_env(x);
    } else {
      prev.row(x).setZero();
      prev(x, x) = 1.0;  // unreachable state contributes nothing
    }
  }

  double rho1 = (rb.array().cube() * xi.array()).sum();

  // First pass: tail sum s = sum_{j>=1} P^j rb for the triple terms.
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  for_each_power(p, xi_env, tol, "varrho",
                 [&](const Eigen::MatrixXd& pk) { s += pk * rb; });

  double rho2 = 0.0, rho3 = 0.0;
  Eigen::MatrixXd prev_k = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rb_s = rb.cwiseProduct(s);
  for_each_power(p, xi_env, tol, "varrho", [&](const Eigen::MatrixXd& pk) {
    prev_k = prev_k * prev;
    rho2 += 3.0 * (xi.array() * rb.array().square() * (pk * rb).array()).sum();
    rho2 += 3.0 * (xi.array() * rb.array().square() * (prev_k * rb).array()).sum();
    rho3 += 6.0 * (xi.array() * rb.array() * (pk * rb_s).array()).sum();
  });
  return rho1 + rho2 + rho3;
}

}  // namespace detail

/// Autocovariance route: marginal variance plus twice the lagged
/// autocovariances, cut off once ||P^k - 1 xi^T||_inf < tol.
inline double asymptotic_variance_series(const InducedChain& c, const Eigen::VectorXd& xi,
                                         double mean, double tol = 1e-12) {
  return detail::variance_series_impl(c.p, c.r, xi, mean, tol);
}

inline double varrho(const InducedChain& c, const Eigen::VectorXd& xi, double mean,
                     double tol = 1e-12, bool centered = true) {
  return detail::varrho_impl(c.p, c.r, xi, mean, tol, centered);
}

/// Full pipeline: stationary distribution, mean, Poisson solution, asymptotic
/// variance, varrho and tau1, with the nontriviality and lattice warnings.
inline ChainSolution analyze_chain(const InducedChain& c, double tol = 1e-12,
                                   bool centered_varrho = true) {
  ErgodicityReport rep = check_ergodicity(c);
  if (!rep.irreducible || !rep.aperiodic)
    throw NonErgodicError(std::string("analyze_chain: chain is ") +
                          (!rep.irreducible ? "not irreducible" : "periodic"));
  ChainSolution sol;
  sol.xi = stationary_distribution(c);
  sol.mean = sol.xi.dot(c.r);
  PoissonSolution ps = solve_poisson(c, sol.xi, sol.mean);
  sol.rhat = ps.rhat;
  sol.sigma2 = asymptotic_variance(c, sol.xi, sol.rhat);
  sol.varrho = varrho(c, sol.xi, sol.mean, tol, centered_varrho);
  sol.tau1 = ergodicity_coefficient(c.p);
  if (sol.sigma2 < 1e-8)
    sol.warnings.push_back("asymptotic variance is numerically trivial (sigma2 = " +
                           std::to_string(sol.sigma2) + ")");
  if (lattice_reward_suspect(c.r))
    sol.warnings.push_back(
        "reward values lie on a common arithmetic grid; the nonlattice modeling "
        "assumption may not hold");
  return sol;
}

}  // namespace riskmdp
