#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskmdp/chain_analysis.hpp"

namespace riskmdp {

struct UnvisitedStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Observed transition counts under a fixed policy.
struct TransitionCounts {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> visits;

  static TransitionCounts from_matrix(
      Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> m) {
    TransitionCounts tc;
    tc.visits = m.rowwise().sum();
    tc.counts = std::move(m);
    return tc;
  }

  static TransitionCounts from_trajectory(const std::vector<int>& states, int n_states) {
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> m =
        Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_states, n_states);
    for (std::size_t i = 0; i + 1 < states.size(); ++i) m(states[i], states[i + 1]) += 1;
    return from_matrix(std::move(m));
  }

  std::int64_t total() const { return visits.sum(); }
};

struct KernelEstimate {
  Eigen::MatrixXd p_hat;
  double eps1 = 0.0;
  double delta1 = 0.0;
};

/// Empirical per-row frequencies with an L1 concentration radius:
/// eps1 = max_x sqrt((2/visits[x]) (|X| ln 2 + ln(|X|/delta))), union-bounded
/// over rows so that P(||P_hat - P||_inf <= eps1) >= 1 - delta.
inline KernelEstimate estimate_kernel(const TransitionCounts& tc, double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("estimate_kernel: delta must lie in (0,1)");
  const Eigen::Index n = tc.counts.rows();
  KernelEstimate est;
  est.p_hat.setZero(n, n);
  est.delta1 = delta;
  double nd = static_cast<double>(n);
  double log_term = nd * std::log(2.0) + std::log(nd / delta);
  for (Eigen::Index x = 0; x < n; ++x) {
    if (tc.visits(x) == 0)
      throw UnvisitedStateError("estimate_kernel: state " + std::to_string(x) +
                                " was never visited; empirical row undefined");
    double vx = static_cast<double>(tc.visits(x));
    for (Eigen::Index y = 0; y < n; ++y)
      est.p_hat(x, y) = static_cast<double>(tc.counts(x, y)) / vx;
    est.eps1 = std::max(est.eps1, std::sqrt(2.0 / vx * log_term));
  }
  return est;
}

/// Row x0 of p_hat^n2 (the power-iteration stationary estimate); n2 = 0 gives
/// the point mass at x0.
inline Eigen::VectorXd power_stationary(const Eigen::MatrixXd& p_hat, int x0, long n2) {
  const Eigen::Index n = p_hat.rows();
  if (x0 < 0 || x0 >= n) throw std::invalid_argument("power_stationary: x0 out of range");
  if (n2 < 0) throw std::invalid_argument("power_stationary: n2 must be >= 0");
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(n);
  v(x0) = 1.0;
  if (n2 <= 4096) {
    for (long k = 0; k < n2; ++k) v = v * p_hat;
  } else {
    Eigen::MatrixXd base = p_hat;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(n, n);
    unsigned long e = static_cast<unsigned long>(n2);
    while (e > 0) {
      if (e & 1ul) acc = acc * base;
      base = base * base;
      e >>= 1;
    }
    v = v * acc;
  }
  return v.transpose();
}

/// Inputs fixed before scanning n2. When c_is_plugin is set, c holds
/// sigma_min of the estimated H and each candidate uses the Weyl-corrected
/// lower bound c - varpi_tilde(n2); a user override passes c directly.
struct CertificateInputs {
  double eps1 = 0.0;
  double delta1 = 0.0;
  double tau1_hat = 0.0;
  double m_const = 1.0;
  double tau_geo = 0.0;
  double c = 0.0;
  bool c_is_plugin = true;
  double epsilon = 0.0;
  double lambda_split = 0.5;
  int n_states = 0;
};

/// The full audit trail of the estimated-evaluation error bound.
struct EstimationCertificate {
  double eps1 = 0.0, delta1 = 0.0, tau1_hat = 0.0;
  long n2 = 0;
  double m_const = 1.0, tau_geo = 0.0;
  double varpi_tilde = 0.0;
  double alpha1 = 0.0, alpha2 = 0.0;
  double c = 0.0;  // effective Assumption-5 lower bound used in the conditions
  double epsilon = 0.0, lambda_split = 0.5;
  double varsigma_tilde = 0.0;  // Poisson solution-difference bound
  double kappa = 0.0;           // mean-variance risk bound
  bool c1_ok = false, c2_ok = false;
  std::string infeasible_reason;

  bool feasible() const { return c1_ok && c2_ok; }
};

namespace detail {

struct ConditionEval {
  double w = 0.0, c_eff = 0.0, alpha1 = 0.0, alpha2 = 0.0;
  double c1_lhs = 0.0, c2_lhs = 0.0;
  bool guard_ok = false, c1 = false, c2 = false;
};

/// varpi_tilde(n2) = sqrt(|X|) (eps1 + eps1/(1 - tau1_hat - eps1) + 2 M tau^{n2}).
inline double varpi_tilde_at(const CertificateInputs& in, long n2) {
  double nd = static_cast<double>(in.n_states);
  double mix = 1.0 - in.tau1_hat - in.eps1;
  double middle = mix > 0.0 ? in.eps1 / mix : std::numeric_limits<double>::infinity();
  return std::sqrt(nd) * (in.eps1 + middle + 2.0 * in.m_const * std::pow(in.tau_geo, n2));
}

inline ConditionEval evaluate_conditions(const CertificateInputs& in, long n2) {
  ConditionEval ev;
  const double nd = static_cast<double>(in.n_states);
  const double sq = std::sqrt(nd);
  ev.w = varpi_tilde_at(in, n2);
  ev.c_eff = in.c_is_plugin ? in.c - ev.w : in.c;
  ev.guard_ok = std::isfinite(ev.w) && ev.c_eff > ev.w;
  if (!ev.guard_ok) return ev;
  const double w = ev.w, c = ev.c_eff;
  ev.c1_lhs = nd * std::pow(nd + 1.0, 3.0) * (w - sq * in.eps1) / ((c - w) * (c - w));
  ev.c1 = ev.c1_lhs <= in.lambda_split * in.epsilon;
  ev.alpha1 = in.eps1 * sq * (nd + 1.0) / (c - w) +
              std::pow(nd, 1.5) / c * (w * (nd + 1.0) / (c - w) + sq * (w - in.eps1 * sq));
  ev.alpha2 = nd * (nd + 1.0) * (2.0 * c - w) / (c * (c - w));
  ev.c2_lhs = ev.alpha2 * nd / c * ((nd + 1.0) * w / (c - w) + sq * (w - in.eps1 * sq)) +
              ev.alpha1 * ev.alpha2 * nd;
  ev.c2 = ev.c2_lhs <= (1.0 - in.lambda_split) * in.epsilon;
  return ev;
}

/// Certificate with every constant evaluated at a fixed n2.
inline EstimationCertificate certificate_at(const CertificateInputs& in, long n2) {
  EstimationCertificate cert;
  cert.eps1 = in.eps1;
  cert.delta1 = in.delta1;
  cert.tau1_hat = in.tau1_hat;
  cert.m_const = in.m_const;
  cert.tau_geo = in.tau_geo;
  cert.epsilon = in.epsilon;
  cert.lambda_split = in.lambda_split;
  cert.n2 = n2;
  ConditionEval ev = evaluate_conditions(in, n2);
  cert.varpi_tilde = ev.w;
  cert.c = ev.c_eff;
  cert.alpha1 = ev.alpha1;
  cert.alpha2 = ev.alpha2;
  cert.c1_ok = ev.guard_ok && ev.c1;
  cert.c2_ok = ev.guard_ok && ev.c2;
  if (ev.guard_ok) {
    double nd = static_cast<double>(in.n_states), sq = std::sqrt(nd);
    cert.varsigma_tilde = sq * (nd + 1.0) * ev.w / (ev.c_eff * (ev.c_eff - ev.w)) +
                          nd / ev.c_eff * (ev.w - in.eps1 * sq);
  }
  double denom = 1.0 - in.tau1_hat - in.eps1;
  if (denom > 0.0)
    cert.kappa = 2.0 * in.m_const * std::pow(in.tau_geo, n2) + in.eps1 / denom +
                 in.lambda_split * in.epsilon;
  return cert;
}

}  // namespace detail

/// kappa = 2 M tau^{n2} + eps1/(1 - tau1_hat - eps1) + lambda epsilon.
inline double mean_variance_bound(const EstimationCertificate& cert) {
  double denom = 1.0 - cert.tau1_hat - cert.eps1;
  if (!(denom > 0.0))
    throw std::invalid_argument(
        "mean_variance_bound: 1 - tau1_hat - eps1 <= 0, certificate cannot certify");
  return 2.0 * cert.m_const * std::pow(cert.tau_geo, static_cast<double>(cert.n2)) +
         cert.eps1 / denom + cert.lambda_split * cert.epsilon;
}

/// Smallest n2 satisfying (C1), (C2) and the Assumption-5 guard c > varpi_tilde.
/// The scan is linear with doubling (cap 10^6); feasibility is monotone in n2,
/// so the first feasible index is well defined. Infeasibility is a reported
/// outcome, not an error: the certificate then carries the limiting inequality
/// and an n2 at which the geometric term has reached the sampling floor.
inline EstimationCertificate choose_n2(const CertificateInputs& in) {
  if (in.n_states <= 0) throw std::invalid_argument("choose_n2: n_states must be positive");
  if (!(in.epsilon > 0.0)) throw std::invalid_argument("choose_n2: epsilon must be positive");
  if (!(in.lambda_split > 0.0 && in.lambda_split < 1.0))
    throw std::invalid_argument("choose_n2: lambda_split must lie in (0,1)");
  if (in.eps1 < 0.0 || in.m_const < 0.0 || in.tau_geo < 0.0)
    throw std::invalid_argument("choose_n2: eps1, m_const, tau_geo must be nonnegative");

  const long cap = 1000000;
  bool geometry_ok = in.tau_geo < 1.0 && (1.0 - in.tau1_hat - in.eps1) > 0.0;

  if (geometry_ok) {
    std::vector<long> candidates;
    for (long k = 1; k <= 64; ++k) candidates.push_back(k);
    for (long k = 128; k <= cap; k *= 2) candidates.push_back(k);
    if (candidates.back() != cap) candidates.push_back(cap);
    long prev = 0;
    for (long cand : candidates) {
      auto ev = detail::evaluate_conditions(in, cand);
      if (ev.guard_ok && ev.c1 && ev.c2) {
        long lo = prev, hi = cand;  // feasibility is monotone: smallest lies in (lo, hi]
        while (hi - lo > 1) {
          long mid = lo + (hi - lo) / 2;
          auto evm = detail::evaluate_conditions(in, mid);
          if (evm.guard_ok && evm.c1 && evm.c2)
            hi = mid;
          else
            lo = mid;
        }
        return detail::certificate_at(in, hi);
      }
      prev = cand;
    }
  }

  // No feasible n2: pick the index where the tau^{n2} term reaches the eps1
  // sampling floor (larger n2 cannot improve the conditions past that).
  long n2_fallback = 1;
  if (in.tau_geo > 0.0 && in.tau_geo < 1.0) {
    double floor_val = std::max(in.eps1, 1e-15);
    double need = std::log(floor_val / std::max(2.0 * in.m_const, 1e-300)) / std::log(in.tau_geo);
    n2_fallback = std::clamp(static_cast<long>(std::ceil(need)), 1l, cap);
  } else if (in.tau_geo >= 1.0) {
    n2_fallback = cap;
  }
  EstimationCertificate cert = detail::certificate_at(in, n2_fallback);
  auto ev = detail::evaluate_conditions(in, cap);
  if (!(1.0 - in.tau1_hat - in.eps1 > 0.0))
    cert.infeasible_reason =
        "1 - tau1_hat - eps1 <= 0: the stationary-distribution perturbation bound is vacuous";
  else if (in.tau_geo >= 1.0)
    cert.infeasible_reason = "tau_geo >= 1: no geometric mixing envelope";
  else if (!ev.guard_ok)
    cert.infeasible_reason = "Assumption-5 guard c > varpi_tilde fails for all n2 <= 1e6";
  else if (!ev.c1)
    cert.infeasible_reason = "(C1) infeasible for all n2 <= 1e6: lhs " +
                             std::to_string(ev.c1_lhs) + " > " +
                             std::to_string(in.lambda_split * in.epsilon);
  else
    cert.infeasible_reason = "(C2) infeasible for all n2 <= 1e6: lhs " +
                             std::to_string(ev.c2_lhs) + " > " +
                             std::to_string((1.0 - in.lambda_split) * in.epsilon);
  return cert;
}

/// Estimated chain solution built from the empirical kernel and the
/// power-iteration stationary estimate.
struct EstimatedSolution {
  Eigen::MatrixXd p_hat;
  Eigen::VectorXd xi_n2;
  double mean_n2 = 0.0;
  Eigen::VectorXd rhat_est;
  double sigma2_est = 0.0;
  double varrho_est = 0.0;
  double sigma_min_h = 0.0;
  double poisson_residual = 0.0;  // O(M tau^{n2}); small only once xi_n2 has converged

  /// View as a ChainSolution for the risk evaluators.
  ChainSolution solution() const {
    ChainSolution s;
    s.xi = xi_n2;
    s.mean = mean_n2;
    s.rhat = rhat_est;
    s.sigma2 = sigma2_est;
    s.varrho = varrho_est;
    s.tau1 = ergodicity_coefficient(p_hat);
    return s;
  }
};

inline EstimatedSolution estimate_solution(const Eigen::MatrixXd& p_hat,
                                           const Eigen::VectorXd& r, int x0, long n2,
                                           double tol = 1e-12) {
  const Eigen::Index n = p_hat.rows();
  if (r.size() != n) throw std::invalid_argument("estimate_solution: reward dimension mismatch");
  EstimatedSolution out;
  out.p_hat = p_hat;
  out.xi_n2 = power_stationary(p_hat, x0, n2);
  out.mean_n2 = out.xi_n2.dot(r);

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n) - p_hat;
  h.noalias() -= Eigen::VectorXd::Ones(n) * out.xi_n2.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.sigma_min_h = svd.singularValues().minCoeff();
  if (out.sigma_min_h < 1e-10)
    throw SingularOperatorError(
        "estimate_solution: H_{n1,n2} is numerically singular, sigma_min = " +
            std::to_string(out.sigma_min_h),
        out.sigma_min_h);
  Eigen::VectorXd rbar = r.array() - out.mean_n2;
  out.rhat_est = svd.solve(rbar);

  Eigen::VectorXd prhat = p_hat * out.rhat_est;
  out.poisson_residual =
      (prhat - out.rhat_est + r - Eigen::VectorXd::Constant(n, out.mean_n2)).cwiseAbs().maxCoeff();
  out.sigma2_est =
      std::max(((out.rhat_est.array().square() - prhat.array().square()) * out.xi_n2.array()).sum(),
               0.0);
  // The truncation envelope must be measured against p_hat's own limit; the
  // finite-power xi_n2 leaves a floor the envelope can never cross.
  Eigen::VectorXd xi_env = out.xi_n2;
  try {
    InducedChain tmp;
    tmp.p = p_hat;
    tmp.r = r;
    tmp.x0 = x0;
    xi_env = stationary_distribution(tmp);
  } catch (const NonErgodicError&) {
    // fall back to xi_n2; the decay check will report honestly if it stalls
  }
  out.varrho_est = detail::varrho_impl(p_hat, r, out.xi_n2, out.mean_n2, tol, true, &xi_env);
  return out;
}

/// sigma_min of I - p - 1 xi^T with xi the exact stationary distribution of p;
/// the plug-in source for the Assumption-5 constant.
inline double sigma_min_h_plugin(const Eigen::MatrixXd& p) {
  InducedChain c;
  c.p = p;
  c.r = Eigen::VectorXd::Zero(p.rows());
  c.x0 = 0;
  Eigen::VectorXd xi = stationary_distribution(c);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(p.rows(), p.cols()) - p;
  h.noalias() -= Eigen::VectorXd::Ones(p.rows()) * xi.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
  return svd.singularValues().minCoeff();
}

/// Tunables of the unknown-kernel pipeline; optionals fall back to the
/// data-driven surrogates (tau = tau1(p_hat), c = sigma_min plug-in).
struct EstimationOptions {
  double delta = 0.05;
  double epsilon = 0.01;
  double lambda_split = 0.5;
  double m_const = 1.0;
  std::optional<double> tau_geo;
  std::optional<double> c_override;
  long n2_override = 0;  // > 0 bypasses choose_n2
  double tol = 1e-12;
};

struct EstimationResult {
  KernelEstimate kernel;
  EstimationCertificate certificate;
  EstimatedSolution solution;
};

/// Unknown-kernel pipeline: empirical kernel -> tau1 -> choose n2 -> estimated
/// stationary/Poisson/variance/varrho.
inline EstimationResult estimate_pipeline(const TransitionCounts& counts,
                                          const Eigen::VectorXd& r, int x0,
                                          const EstimationOptions& opts = {}) {
  EstimationResult res;
  res.kernel = estimate_kernel(counts, opts.delta);

  CertificateInputs in;
  in.eps1 = res.kernel.eps1;
  in.delta1 = res.kernel.delta1;
  in.tau1_hat = ergodicity_coefficient(res.kernel.p_hat);
  in.m_const = opts.m_const;
  in.tau_geo = opts.tau_geo.value_or(in.tau1_hat);
  in.n_states = static_cast<int>(res.kernel.p_hat.rows());
  in.epsilon = opts.epsilon;
  in.lambda_split = opts.lambda_split;
  if (opts.c_override) {
    in.c = *opts.c_override;
    in.c_is_plugin = false;
  } else {
    in.c = sigma_min_h_plugin(res.kernel.p_hat);
    in.c_is_plugin = true;
  }
  res.certificate =
      opts.n2_override > 0 ? detail::certificate_at(in, opts.n2_override) : choose_n2(in);
  res.solution = estimate_solution(res.kernel.p_hat, r, x0, res.certificate.n2, opts.tol);
  return res;
}

}  // namespace riskmdp
