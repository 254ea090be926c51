// Command-line front end: evaluate | estimate | improve | simulate.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "riskmdp/riskmdp.hpp"

namespace fs = std::filesystem;
using riskmdp::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNonErgodic = 2;
constexpr int kExitSingular = 3;
constexpr int kExitUnvisited = 4;
constexpr int kExitMaxIters = 5;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed_flag;
  bool dump_config = false;
};

std::uint64_t resolve_seed(const CommonOpts& opts, std::uint64_t config_seed) {
  if (const char* env = std::getenv("RISKMDP_SEED")) return std::strtoull(env, nullptr, 10);
  if (opts.seed_flag) return *opts.seed_flag;
  return config_seed;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string provenance_line(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_cdf_grid(const fs::path& path, const riskmdp::EdgeworthCdf& e, int points,
                    const std::string& hash, std::uint64_t seed) {
  double t = static_cast<double>(e.horizon);
  double st = e.sigma * std::sqrt(t);
  double lo = t * e.mean - 4.0 * st, hi = t * e.mean + 4.0 * st;
  std::ostringstream os;
  os << provenance_line(hash, seed) << "y,G_T\n";
  for (int i = 0; i < points; ++i) {
    double y = lo + (hi - lo) * i / (points - 1);
    os << fmt(y) << "," << fmt(riskmdp::edgeworth_cdf(e, riskmdp::edgeworth_normalize(e, y)))
       << "\n";
  }
  write_text(path, os.str());
}

riskmdp::RiskSpec resolve_risk(const riskmdp::ExperimentConfig& cfg,
                               const std::string& kind_flag, std::optional<double> lambda_flag) {
  riskmdp::RiskSpec spec = cfg.risk;
  if (!kind_flag.empty()) {
    json j = {{"kind", kind_flag}, {"lambda", lambda_flag.value_or(cfg.risk.lambda)}};
    spec = riskmdp::parse_risk_spec(j, "--risk-kind/");
  } else if (lambda_flag) {
    json j = {{"kind", riskmdp::risk_kind_name(spec.kind)}, {"lambda", *lambda_flag}};
    spec = riskmdp::parse_risk_spec(j, "--lambda/");
  }
  return spec;
}

json risk_record(const riskmdp::ChainSolution& sol, int x0, const riskmdp::RiskSpec& spec,
                 long horizon) {
  json rec;
  rec["risk_kind"] = riskmdp::risk_kind_name(spec.kind);
  rec["lambda"] = spec.lambda;
  rec["mean"] = sol.mean;
  rec["sigma2"] = sol.sigma2;
  rec["varrho"] = sol.varrho;
  if (spec.kind == riskmdp::RiskSpec::Kind::value_at_risk) {
    riskmdp::EdgeworthCdf e(sol.mean, std::sqrt(sol.sigma2), sol.varrho, sol.rhat(x0), horizon);
    riskmdp::QuantileResult q = riskmdp::var_quantile(e, spec.lambda);
    rec["q_lambda"] = q.q_lambda;
    rec["var"] = q.var;
    std::cout << "lambda-quantile q_lambda   = " << q.q_lambda << "\n"
              << "value-at-risk (-q_lambda)  = " << q.var << "\n";
  } else {
    double rho = riskmdp::mean_variance(sol, spec.lambda);
    rec["risk"] = rho;
    std::cout << "mean-variance risk = " << rho << "\n";
  }
  return rec;
}

int cmd_evaluate(const CommonOpts& common, const std::string& kind_flag,
                 std::optional<double> lambda_flag, bool dump_solution, int grid_points,
                 bool varrho_uncentered, bool direct, double d_phi, double d_sigma,
                 double d_varrho, double d_rhat0, long d_horizon) {
  fs::create_directories(common.out_dir);
  if (direct) {
    json cfgj = {{"phi", d_phi},   {"sigma", d_sigma},     {"varrho", d_varrho},
                 {"rhat0", d_rhat0}, {"horizon", d_horizon}, {"lambda", lambda_flag.value_or(0.3)}};
    std::string hash = riskmdp::config_hash(cfgj);
    riskmdp::EdgeworthCdf e(d_phi, d_sigma, d_varrho, d_rhat0, d_horizon);
    double lambda = lambda_flag.value_or(0.3);
    riskmdp::QuantileResult q = riskmdp::var_quantile(e, lambda);
    std::cout << "lambda-quantile q_lambda   = " << q.q_lambda << "\n"
              << "value-at-risk (-q_lambda)  = " << q.var << "\n";
    json rec = {{"risk_kind", "value_at_risk"},
                {"lambda", lambda},
                {"q_lambda", q.q_lambda},
                {"var", q.var},
                {"mean", d_phi},
                {"sigma2", d_sigma * d_sigma},
                {"varrho", d_varrho},
                {"config_hash", hash},
                {"seed", 0}};
    write_json(fs::path(common.out_dir) / "result.json", rec);
    write_cdf_grid(fs::path(common.out_dir) / "cdf_grid.csv", e, grid_points, hash, 0);
    return 0;
  }

  json cfgj = riskmdp::load_json_file(common.config_path);
  riskmdp::ExperimentConfig cfg = riskmdp::parse_experiment_config(cfgj);
  if (common.dump_config) {
    std::cout << riskmdp::to_json(cfg).dump(2) << "\n";
    return 0;
  }
  std::uint64_t seed = resolve_seed(common, cfg.seed);
  std::string hash = riskmdp::config_hash(riskmdp::to_json(cfg));
  riskmdp::RiskSpec spec = resolve_risk(cfg, kind_flag, lambda_flag);

  riskmdp::InducedChain chain = riskmdp::induce_chain(cfg.mdp, cfg.policy, cfg.x0);
  riskmdp::ChainSolution sol = riskmdp::analyze_chain(chain, 1e-12, !varrho_uncentered);
  for (const auto& w : sol.warnings) std::cerr << "warning: " << w << "\n";

  json rec = risk_record(sol, cfg.x0, spec, cfg.mdp.horizon);
  rec["config_hash"] = hash;
  rec["seed"] = seed;
  write_json(fs::path(common.out_dir) / "result.json", rec);
  if (dump_solution) {
    json sj = riskmdp::to_json(sol);
    sj["config_hash"] = hash;
    sj["seed"] = seed;
    write_json(fs::path(common.out_dir) / "solution.json", sj);
  }
  if (sol.sigma2 > 0.0) {
    riskmdp::EdgeworthCdf e(sol.mean, std::sqrt(sol.sigma2), sol.varrho, sol.rhat(cfg.x0),
                            cfg.mdp.horizon);
    write_cdf_grid(fs::path(common.out_dir) / "cdf_grid.csv", e, grid_points, hash, seed);
  }
  return 0;
}

riskmdp::TransitionCounts read_trajectory_csv(const std::string& path, int n_states) {
  std::ifstream in(path);
  if (!in) throw riskmdp::ConfigError("cannot open trajectory file '" + path + "'");
  std::vector<int> states;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long t;
    int s;
    char comma;
    if (!(ls >> t >> comma >> s) || comma != ',')
      throw riskmdp::ConfigError("trajectory file '" + path + "' line " + std::to_string(lineno) +
                                 ": expected 't,state'");
    if (s < 0 || s >= n_states)
      throw riskmdp::ConfigError("trajectory file '" + path + "' line " + std::to_string(lineno) +
                                 ": state out of range");
    states.push_back(s);
  }
  return riskmdp::TransitionCounts::from_trajectory(states, n_states);
}

riskmdp::TransitionCounts read_counts_file(const std::string& path, int n_states) {
  std::ifstream in(path);
  if (!in) throw riskmdp::ConfigError("cannot open counts file '" + path + "'");
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> m(n_states, n_states);
  for (int x = 0; x < n_states; ++x)
    for (int y = 0; y < n_states; ++y)
      if (!(in >> m(x, y)))
        throw riskmdp::ConfigError("counts file '" + path + "': expected " +
                                   std::to_string(n_states * n_states) + " integers");
  return riskmdp::TransitionCounts::from_matrix(std::move(m));
}

int cmd_estimate(const CommonOpts& common, const std::string& trajectory_path,
                 const std::string& counts_path, const riskmdp::EstimationOptions& opts,
                 const std::string& kind_flag, std::optional<double> lambda_flag) {
  fs::create_directories(common.out_dir);
  json cfgj = riskmdp::load_json_file(common.config_path);
  riskmdp::ExperimentConfig cfg = riskmdp::parse_experiment_config(cfgj);
  if (common.dump_config) {
    std::cout << riskmdp::to_json(cfg).dump(2) << "\n";
    return 0;
  }
  std::uint64_t seed = resolve_seed(common, cfg.seed);
  std::string hash = riskmdp::config_hash(riskmdp::to_json(cfg));
  riskmdp::RiskSpec spec = resolve_risk(cfg, kind_flag, lambda_flag);

  riskmdp::InducedChain chain = riskmdp::induce_chain(cfg.mdp, cfg.policy, cfg.x0);
  riskmdp::TransitionCounts counts =
      !trajectory_path.empty() ? read_trajectory_csv(trajectory_path, cfg.mdp.n_states)
                               : read_counts_file(counts_path, cfg.mdp.n_states);

  riskmdp::EstimationResult res = riskmdp::estimate_pipeline(counts, chain.r, cfg.x0, opts);
  if (!res.certificate.feasible())
    std::cerr << "certificate infeasible: " << res.certificate.infeasible_reason << "\n";

  json sj = riskmdp::to_json(res.solution);
  sj["eps1"] = res.kernel.eps1;
  sj["delta1"] = res.kernel.delta1;
  sj["config_hash"] = hash;
  sj["seed"] = seed;
  write_json(fs::path(common.out_dir) / "estimated_solution.json", sj);
  json cj = riskmdp::to_json(res.certificate);
  cj["config_hash"] = hash;
  cj["seed"] = seed;
  write_json(fs::path(common.out_dir) / "certificate.json", cj);

  riskmdp::ChainSolution sol = res.solution.solution();
  json rec = risk_record(sol, cfg.x0, spec, cfg.mdp.horizon);
  rec["kappa"] = res.certificate.kappa;
  rec["certificate_feasible"] = res.certificate.feasible();
  rec["config_hash"] = hash;
  rec["seed"] = seed;
  write_json(fs::path(common.out_dir) / "result.json", rec);
  return 0;
}

int cmd_improve(const CommonOpts& common, const std::string& method, const std::string& eval_mode,
                riskmdp::ImprovementConfig imp, const std::string& kind_flag,
                std::optional<double> lambda_flag) {
  fs::create_directories(common.out_dir);
  json cfgj = riskmdp::load_json_file(common.config_path);
  riskmdp::ExperimentConfig cfg = riskmdp::parse_experiment_config(cfgj);
  if (common.dump_config) {
    std::cout << riskmdp::to_json(cfg).dump(2) << "\n";
    return 0;
  }
  imp.seed = resolve_seed(common, cfg.seed);
  imp.x0 = cfg.x0;
  std::string hash = riskmdp::config_hash(riskmdp::to_json(cfg));
  riskmdp::RiskSpec spec = resolve_risk(cfg, kind_flag, lambda_flag);

  if (method == "spsa")
    imp.method = riskmdp::ImprovementConfig::Method::spsa;
  else if (method == "sf")
    imp.method = riskmdp::ImprovementConfig::Method::sf;
  else
    throw riskmdp::ConfigError("--method must be spsa or sf");
  riskmdp::EvalMode mode;
  if (eval_mode == "exact")
    mode = riskmdp::EvalMode::exact;
  else if (eval_mode == "estimated")
    mode = riskmdp::EvalMode::estimated;
  else
    throw riskmdp::ConfigError("--eval must be exact or estimated");

  riskmdp::ImprovementTrace trace = riskmdp::improve(cfg.mdp, cfg.policy, spec, imp, mode);
  for (const auto& w : trace.warnings) std::cerr << "warning: " << w << "\n";

  std::ostringstream os;
  os << provenance_line(hash, imp.seed) << "t,risk,theta_norm,step\n";
  for (const auto& it : trace.iterations)
    os << it.t << "," << fmt(it.risk) << "," << fmt(it.theta.norm()) << "," << fmt(it.step)
       << "\n";
  write_text(fs::path(common.out_dir) / "trace.csv", os.str());

  json pj;
  pj["theta"] = std::vector<double>(trace.theta_star.data(),
                                    trace.theta_star.data() + trace.theta_star.size());
  pj["converged"] = trace.converged;
  pj["iterations"] = trace.iterations.size();
  if (!trace.iterations.empty()) {
    pj["initial_risk"] = trace.iterations.front().risk;
    pj["final_risk"] = trace.iterations.back().risk;
  }
  pj["warnings"] = trace.warnings;
  pj["config_hash"] = hash;
  pj["seed"] = imp.seed;
  write_json(fs::path(common.out_dir) / "final_policy.json", pj);

  std::cout << (trace.converged ? "converged" : "max_iters reached") << " after "
            << trace.iterations.size() << " iterations\n";
  return trace.converged ? 0 : kExitMaxIters;
}

int cmd_simulate(const CommonOpts& common, long n_traj, long horizon_flag, bool raw,
                 int n_threads) {
  fs::create_directories(common.out_dir);
  json cfgj = riskmdp::load_json_file(common.config_path);
  riskmdp::ExperimentConfig cfg = riskmdp::parse_experiment_config(cfgj);
  if (common.dump_config) {
    std::cout << riskmdp::to_json(cfg).dump(2) << "\n";
    return 0;
  }
  std::uint64_t seed = resolve_seed(common, cfg.seed);
  std::string hash = riskmdp::config_hash(riskmdp::to_json(cfg));
  long horizon = horizon_flag > 0 ? horizon_flag : cfg.mdp.horizon;

  riskmdp::InducedChain chain = riskmdp::induce_chain(cfg.mdp, cfg.policy, cfg.x0);
  riskmdp::SimBatch batch = riskmdp::simulate(chain, n_traj, horizon, seed, n_threads);

  json j;
  j["n_traj"] = batch.n_traj;
  j["horizon"] = batch.horizon;
  j["seed"] = seed;
  if (batch.n_traj >= 10) {
    riskmdp::Cumulants cum = riskmdp::empirical_cumulants(batch);
    j["mean_rate"] = cum.mean_rate;
    j["var_rate"] = cum.var_rate;
    j["k3_rate"] = cum.k3_rate;
    j["se_mean"] = cum.se_mean;
    j["se_var"] = cum.se_var;
    j["se_k3"] = cum.se_k3;
    std::cout << "mean_rate=" << cum.mean_rate << " var_rate=" << cum.var_rate
              << " k3_rate=" << cum.k3_rate << "\n";
  }
  j["config_hash"] = hash;
  write_json(fs::path(common.out_dir) / "simbatch.json", j);

  if (raw) {
    std::ostringstream os;
    os << provenance_line(hash, seed) << "s_value\n";
    for (double v : batch.s_values) os << fmt(v) << "\n";
    write_text(fs::path(common.out_dir) / "s_values.csv", os.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk evaluation and improvement for fixed-policy finite MDPs"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string kind_flag;
  std::optional<double> lambda_flag;

  auto add_common = [&](CLI::App* sub, bool config_required = true) {
    sub->add_option("--config", common.config_path, "experiment config JSON")
        ->required(config_required);
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&common](const std::uint64_t& s) { common.seed_flag = s; },
        "seed override (RISKMDP_SEED env var takes precedence)");
    sub->add_flag("--dump-config", common.dump_config, "print the parsed config and exit");
  };
  auto add_risk_flags = [&](CLI::App* sub) {
    sub->add_option("--risk-kind", kind_flag, "value_at_risk | mean_variance");
    sub->add_option_function<double>(
        "--lambda", [&lambda_flag](const double& v) { lambda_flag = v; }, "risk parameter");
  };

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "risk evaluation with the known kernel");
  bool dump_solution = false, varrho_uncentered = false, direct = false;
  int grid_points = 401;
  double d_phi = 0.1, d_sigma = 1.0, d_varrho = 1.0, d_rhat0 = 0.5;
  long d_horizon = 100;
  add_common(ev, false);
  add_risk_flags(ev);
  ev->add_flag("--dump-solution", dump_solution, "write the chain solution JSON");
  ev->add_option("--grid-points", grid_points, "CDF grid resolution");
  ev->add_flag("--varrho-uncentered", varrho_uncentered,
               "evaluate the literal uncentered third-order sums");
  ev->add_flag("--direct", direct, "evaluate from scalar parameters instead of a chain");
  ev->add_option("--phi", d_phi, "per-step mean (direct mode)");
  ev->add_option("--sigma", d_sigma, "sigma (direct mode)");
  ev->add_option("--varrho", d_varrho, "third-order constant (direct mode)");
  ev->add_option("--rhat0", d_rhat0, "Poisson solution at x0 (direct mode)");
  ev->add_option("--T", d_horizon, "horizon (direct mode)");

  // estimate
  auto* es = app.add_subcommand("estimate", "risk evaluation with an estimated kernel");
  std::string trajectory_path, counts_path;
  riskmdp::EstimationOptions est_opts;
  double tau_geo_flag = -1.0, c_flag = -1.0;
  long n2_flag = 0;
  add_common(es);
  add_risk_flags(es);
  es->add_option("--trajectory", trajectory_path, "CSV of t,state observations");
  es->add_option("--counts", counts_path, "whitespace-separated counts matrix");
  es->add_option("--delta", est_opts.delta, "concentration failure probability delta1");
  es->add_option("--epsilon", est_opts.epsilon, "target variance error");
  es->add_option("--lambda-split", est_opts.lambda_split, "the (C1)/(C2) split in (0,1)");
  es->add_option("--m-const", est_opts.m_const, "Assumption-4 constant M");
  es->add_option("--tau-geo", tau_geo_flag, "Assumption-4 rate tau (default tau1(p_hat))");
  es->add_option("--c", c_flag, "Assumption-5 lower bound (default sigma_min plug-in)");
  es->add_option("--n2", n2_flag, "fix n2 instead of scanning");

  // improve
  auto* im = app.add_subcommand("improve", "projected stochastic gradient policy improvement");
  std::string method = "spsa", eval_mode = "exact";
  riskmdp::ImprovementConfig imp;
  add_common(im);
  add_risk_flags(im);
  im->add_option("--method", method, "spsa | sf");
  im->add_option("--beta", imp.beta, "perturbation radius");
  im->add_option("--step-a", imp.step_a, "step schedule numerator");
  im->add_option("--step-A", imp.step_A, "step schedule offset");
  im->add_option("--eps-stop", imp.epsilon_stop, "stopping threshold on the sup-norm step");
  im->add_option("--max-iters", imp.max_iters, "iteration cap");
  im->add_option("--eval", eval_mode, "exact | estimated");
  im->add_option("--estimated-n1", imp.estimated_n1, "trajectory length per probe (estimated)");

  // simulate
  auto* si = app.add_subcommand("simulate", "Monte Carlo batch of S_T");
  long n_traj = 10000, horizon_flag = 0;
  bool raw = false;
  int n_threads = 0;
  add_common(si);
  si->add_option("--n-traj", n_traj, "number of trajectories");
  si->add_option("--T", horizon_flag, "horizon override (default: config horizon)");
  si->add_flag("--raw", raw, "also write raw s_values.csv");
  si->add_option("--threads", n_threads, "worker threads (0 = auto)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ev->parsed())
      return cmd_evaluate(common, kind_flag, lambda_flag, dump_solution, grid_points,
                          varrho_uncentered, direct, d_phi, d_sigma, d_varrho, d_rhat0, d_horizon);
    if (es->parsed()) {
      if (trajectory_path.empty() == counts_path.empty())
        throw riskmdp::ConfigError("estimate needs exactly one of --trajectory or --counts");
      if (tau_geo_flag >= 0.0) est_opts.tau_geo = tau_geo_flag;
      if (c_flag >= 0.0) est_opts.c_override = c_flag;
      est_opts.n2_override = n2_flag;
      return cmd_estimate(common, trajectory_path, counts_path, est_opts, kind_flag, lambda_flag);
    }
    if (im->parsed()) return cmd_improve(common, method, eval_mode, imp, kind_flag, lambda_flag);
    if (si->parsed()) return cmd_simulate(common, n_traj, horizon_flag, raw, n_threads);
  } catch (const riskmdp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const riskmdp::UnvisitedStateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnvisited;
  } catch (const riskmdp::SingularOperatorError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSingular;
  } catch (const riskmdp::NonErgodicError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNonErgodic;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
