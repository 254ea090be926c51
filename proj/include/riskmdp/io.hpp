#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskmdp/chain_analysis.hpp"
#include "riskmdp/edgeworth.hpp"
#include "riskmdp/estimation.hpp"
#include "riskmdp/mdp.hpp"

namespace riskmdp {

using json = nlohmann::json;

/// Config-parse failure; the message names the offending key path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  TabularMdp mdp;
  SoftmaxPolicy policy;
  int x0 = 0;
  RiskSpec risk;
  std::uint64_t seed = 0;
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                                const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key '" + path + it.key() + "'");
}

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError("missing key '" + path + key + "'");
  return *it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError("'" + path + "' must be a number");
  return j.get<double>();
}

inline long as_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError("'" + path + "' must be an integer");
  return j.get<long>();
}

inline Eigen::VectorXd as_vector(const json& j, Eigen::Index size, const std::string& path) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size)
    throw ConfigError("'" + path + "' must be an array of length " + std::to_string(size));
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i)
    v(i) = as_number(j[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
  return v;
}

}  // namespace detail

inline RiskSpec parse_risk_spec(const json& j, const std::string& path = "risk.") {
  detail::reject_unknown_keys(j, {"kind", "lambda"}, path);
  RiskSpec spec;
  std::string kind = detail::require(j, "kind", path).get<std::string>();
  if (kind == "value_at_risk")
    spec.kind = RiskSpec::Kind::value_at_risk;
  else if (kind == "mean_variance")
    spec.kind = RiskSpec::Kind::mean_variance;
  else
    throw ConfigError("'" + path + "kind' must be value_at_risk or mean_variance, got '" + kind +
                      "'");
  spec.lambda = detail::as_number(detail::require(j, "lambda", path), path + "lambda");
  if (spec.kind == RiskSpec::Kind::value_at_risk && !(spec.lambda > 0.0 && spec.lambda < 1.0))
    throw ConfigError("'" + path + "lambda' must lie in (0,1) for value_at_risk");
  if (spec.kind == RiskSpec::Kind::mean_variance && spec.lambda < 0.0)
    throw ConfigError("'" + path + "lambda' must be >= 0 for mean_variance");
  return spec;
}

/// Strict parse of the experiment config; unknown keys are rejected with the
/// offending location.
inline ExperimentConfig parse_experiment_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"n_states", "n_actions", "kernel", "reward", "horizon", "x0",
                               "theta", "bounds", "risk", "seed"},
                              "");
  ExperimentConfig cfg;
  cfg.mdp.n_states = static_cast<int>(detail::as_integer(detail::require(j, "n_states", ""), "n_states"));
  cfg.mdp.n_actions =
      static_cast<int>(detail::as_integer(detail::require(j, "n_actions", ""), "n_actions"));
  cfg.mdp.horizon = detail::as_integer(detail::require(j, "horizon", ""), "horizon");
  if (cfg.mdp.n_states <= 0 || cfg.mdp.n_actions <= 0)
    throw ConfigError("'n_states' and 'n_actions' must be positive");

  const json& kernel = detail::require(j, "kernel", "");
  if (!kernel.is_array() || static_cast<int>(kernel.size()) != cfg.mdp.n_states)
    throw ConfigError("'kernel' must be an array of n_states elements");
  cfg.mdp.kernel.resize(static_cast<std::size_t>(cfg.mdp.n_states) * cfg.mdp.n_actions *
                        cfg.mdp.n_states);
  for (int x = 0; x < cfg.mdp.n_states; ++x) {
    const json& jx = kernel[static_cast<std::size_t>(x)];
    std::string px = "kernel[" + std::to_string(x) + "]";
    if (!jx.is_array() || static_cast<int>(jx.size()) != cfg.mdp.n_actions)
      throw ConfigError("'" + px + "' must be an array of n_actions rows");
    for (int a = 0; a < cfg.mdp.n_actions; ++a) {
      Eigen::VectorXd row = detail::as_vector(jx[static_cast<std::size_t>(a)], cfg.mdp.n_states,
                                              px + "[" + std::to_string(a) + "]");
      for (int y = 0; y < cfg.mdp.n_states; ++y)
        cfg.mdp.kernel[static_cast<std::size_t>(x * cfg.mdp.n_actions + a) * cfg.mdp.n_states + y] =
            row(y);
    }
  }

  const json& reward = detail::require(j, "reward", "");
  if (!reward.is_array() || static_cast<int>(reward.size()) != cfg.mdp.n_states)
    throw ConfigError("'reward' must be an array of n_states rows");
  cfg.mdp.reward.resize(static_cast<std::size_t>(cfg.mdp.n_states) * cfg.mdp.n_actions);
  for (int x = 0; x < cfg.mdp.n_states; ++x) {
    Eigen::VectorXd row = detail::as_vector(reward[static_cast<std::size_t>(x)], cfg.mdp.n_actions,
                                            "reward[" + std::to_string(x) + "]");
    for (int a = 0; a < cfg.mdp.n_actions; ++a)
      cfg.mdp.reward[static_cast<std::size_t>(x) * cfg.mdp.n_actions + a] = row(a);
  }

  const Eigen::Index k1 = static_cast<Eigen::Index>(cfg.mdp.n_states) * cfg.mdp.n_actions;
  cfg.policy.theta = Eigen::VectorXd::Zero(k1);
  if (j.contains("theta")) cfg.policy.theta = detail::as_vector(j["theta"], k1, "theta");
  cfg.policy.lo = Eigen::VectorXd::Constant(k1, -20.0);
  cfg.policy.hi = Eigen::VectorXd::Constant(k1, 20.0);
  if (j.contains("bounds")) {
    const json& b = j["bounds"];
    detail::reject_unknown_keys(b, {"lo", "hi"}, "bounds.");
    auto parse_side = [&](const char* key) {
      const json& side = detail::require(b, key, "bounds.");
      if (side.is_number())
        return Eigen::VectorXd(Eigen::VectorXd::Constant(k1, side.get<double>()));
      return detail::as_vector(side, k1, std::string("bounds.") + key);
    };
    cfg.policy.lo = parse_side("lo");
    cfg.policy.hi = parse_side("hi");
    for (Eigen::Index i = 0; i < k1; ++i)
      if (!(cfg.policy.lo(i) <= cfg.policy.hi(i)))
        throw ConfigError("'bounds' not well-ordered at coordinate " + std::to_string(i));
  }

  if (j.contains("x0")) {
    cfg.x0 = static_cast<int>(detail::as_integer(j["x0"], "x0"));
    if (cfg.x0 < 0 || cfg.x0 >= cfg.mdp.n_states) throw ConfigError("'x0' out of range");
  }
  if (j.contains("risk")) cfg.risk = parse_risk_spec(j["risk"]);
  if (j.contains("seed")) cfg.seed = static_cast<std::uint64_t>(detail::as_integer(j["seed"], "seed"));

  std::vector<std::string> violations = validate_mdp(cfg.mdp);
  if (!violations.empty()) {
    std::string msg = "invalid MDP:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConfigError(msg);
  }
  return cfg;
}

inline json to_json(const ExperimentConfig& cfg) {
  json j;
  j["n_states"] = cfg.mdp.n_states;
  j["n_actions"] = cfg.mdp.n_actions;
  j["horizon"] = cfg.mdp.horizon;
  json kernel = json::array();
  for (int x = 0; x < cfg.mdp.n_states; ++x) {
    json jx = json::array();
    for (int a = 0; a < cfg.mdp.n_actions; ++a) {
      json row = json::array();
      for (int y = 0; y < cfg.mdp.n_states; ++y) row.push_back(cfg.mdp.p(x, a, y));
      jx.push_back(row);
    }
    kernel.push_back(jx);
  }
  j["kernel"] = kernel;
  json reward = json::array();
  for (int x = 0; x < cfg.mdp.n_states; ++x) {
    json row = json::array();
    for (int a = 0; a < cfg.mdp.n_actions; ++a) row.push_back(cfg.mdp.r(x, a));
    reward.push_back(row);
  }
  j["reward"] = reward;
  j["theta"] = std::vector<double>(cfg.policy.theta.data(),
                                   cfg.policy.theta.data() + cfg.policy.theta.size());
  j["bounds"] = {
      {"lo", std::vector<double>(cfg.policy.lo.data(), cfg.policy.lo.data() + cfg.policy.lo.size())},
      {"hi",
       std::vector<double>(cfg.policy.hi.data(), cfg.policy.hi.data() + cfg.policy.hi.size())}};
  j["x0"] = cfg.x0;
  j["risk"] = {{"kind", risk_kind_name(cfg.risk.kind)}, {"lambda", cfg.risk.lambda}};
  j["seed"] = cfg.seed;
  return j;
}

inline json to_json(const ChainSolution& sol) {
  json j;
  j["xi"] = std::vector<double>(sol.xi.data(), sol.xi.data() + sol.xi.size());
  j["mean"] = sol.mean;
  j["rhat"] = std::vector<double>(sol.rhat.data(), sol.rhat.data() + sol.rhat.size());
  j["sigma2"] = sol.sigma2;
  j["varrho"] = sol.varrho;
  j["tau1"] = sol.tau1;
  j["warnings"] = sol.warnings;
  return j;
}

inline json to_json(const EstimationCertificate& cert) {
  json j;
  j["eps1"] = cert.eps1;
  j["delta1"] = cert.delta1;
  j["tau1_hat"] = cert.tau1_hat;
  j["n2"] = cert.n2;
  j["m_const"] = cert.m_const;
  j["tau_geo"] = cert.tau_geo;
  j["varpi_tilde"] = cert.varpi_tilde;
  j["alpha1"] = cert.alpha1;
  j["alpha2"] = cert.alpha2;
  j["c"] = cert.c;
  j["epsilon"] = cert.epsilon;
  j["lambda_split"] = cert.lambda_split;
  j["varsigma_tilde"] = cert.varsigma_tilde;
  j["kappa"] = cert.kappa;
  j["c1_ok"] = cert.c1_ok;
  j["c2_ok"] = cert.c2_ok;
  if (!cert.infeasible_reason.empty()) j["infeasible_reason"] = cert.infeasible_reason;
  return j;
}

inline json to_json(const EstimatedSolution& sol) {
  json j;
  const Eigen::Index n = sol.p_hat.rows();
  json p = json::array();
  for (Eigen::Index x = 0; x < n; ++x) {
    json row = json::array();
    for (Eigen::Index y = 0; y < n; ++y) row.push_back(sol.p_hat(x, y));
    p.push_back(row);
  }
  j["p_hat"] = p;
  j["xi_n2"] = std::vector<double>(sol.xi_n2.data(), sol.xi_n2.data() + sol.xi_n2.size());
  j["mean_n2"] = sol.mean_n2;
  j["rhat_est"] =
      std::vector<double>(sol.rhat_est.data(), sol.rhat_est.data() + sol.rhat_est.size());
  j["sigma2_est"] = sol.sigma2_est;
  j["varrho_est"] = sol.varrho_est;
  j["sigma_min_h"] = sol.sigma_min_h;
  j["poisson_residual"] = sol.poisson_residual;
  return j;
}

/// FNV-1a over the canonical dump; stable across runs and platforms.
inline std::string config_hash(const json& j) {
  std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("JSON parse error in '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace riskmdp
