#include <catch2/catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "riskmdp/io.hpp"

using namespace riskmdp;

namespace {

json valid_config() {
  return json{{"n_states", 2},
              {"n_actions", 2},
              {"kernel",
               {{{0.9, 0.1}, {0.5, 0.5}}, {{0.2, 0.8}, {0.5, 0.5}}}},
              {"reward", {{1.0, -1.0}, {0.5, -0.5}}},
              {"horizon", 100},
              {"x0", 0},
              {"theta", {0.0, 0.0, 0.0, 0.0}},
              {"bounds", {{"lo", -5.0}, {"hi", 5.0}}},
              {"risk", {{"kind", "value_at_risk"}, {"lambda", 0.3}}},
              {"seed", 42}};
}

}  // namespace

TEST_CASE("a valid config parses into the expected structures") {
  ExperimentConfig cfg = parse_experiment_config(valid_config());
  REQUIRE(cfg.mdp.n_states == 2);
  REQUIRE(cfg.mdp.n_actions == 2);
  REQUIRE(cfg.mdp.horizon == 100);
  REQUIRE(cfg.mdp.p(0, 1, 0) == 0.5);
  REQUIRE(cfg.mdp.r(1, 0) == 0.5);
  REQUIRE(cfg.policy.theta.size() == 4);
  REQUIRE(cfg.policy.lo(2) == -5.0);
  REQUIRE(cfg.risk.kind == RiskSpec::Kind::value_at_risk);
  REQUIRE(cfg.risk.lambda == 0.3);
  REQUIRE(cfg.seed == 42);
}

TEST_CASE("unknown keys are rejected with their location") {
  json j = valid_config();
  j["mystery"] = 1;
  REQUIRE_THROWS_WITH(parse_experiment_config(j),
                      Catch::Matchers::ContainsSubstring("mystery"));

  json j2 = valid_config();
  j2["risk"]["extra"] = true;
  REQUIRE_THROWS_WITH(parse_experiment_config(j2),
                      Catch::Matchers::ContainsSubstring("risk.extra"));
}

TEST_CASE("malformed kernels and rewards name the offending entry") {
  json j = valid_config();
  j["kernel"][0][0] = {0.9, 0.2};  // row sums to 1.1
  REQUIRE_THROWS_WITH(parse_experiment_config(j),
                      Catch::Matchers::ContainsSubstring("kernel(0,0)"));

  json j2 = valid_config();
  j2["reward"][0][1] = -1.5;
  REQUIRE_THROWS_WITH(parse_experiment_config(j2),
                      Catch::Matchers::ContainsSubstring("reward(0,1)"));

  json j3 = valid_config();
  j3["kernel"][1] = {{0.2, 0.8}};  // missing an action row
  REQUIRE_THROWS_WITH(parse_experiment_config(j3),
                      Catch::Matchers::ContainsSubstring("kernel[1]"));
}

TEST_CASE("risk spec validation") {
  json bad = {{"kind", "value_at_risk"}, {"lambda", 1.5}};
  REQUIRE_THROWS_AS(parse_risk_spec(bad), ConfigError);
  json bad2 = {{"kind", "quantile"}, {"lambda", 0.3}};
  REQUIRE_THROWS_AS(parse_risk_spec(bad2), ConfigError);
  json ok = {{"kind", "mean_variance"}, {"lambda", 2.0}};
  REQUIRE(parse_risk_spec(ok).lambda == 2.0);
}

TEST_CASE("configs round-trip through dump and re-parse") {
  ExperimentConfig cfg = parse_experiment_config(valid_config());
  json dumped = to_json(cfg);
  ExperimentConfig cfg2 = parse_experiment_config(dumped);
  REQUIRE(cfg2.mdp.kernel == cfg.mdp.kernel);
  REQUIRE(cfg2.mdp.reward == cfg.mdp.reward);
  REQUIRE((cfg2.policy.theta - cfg.policy.theta).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(cfg2.x0 == cfg.x0);
  REQUIRE(cfg2.seed == cfg.seed);
  REQUIRE(config_hash(to_json(cfg2)) == config_hash(dumped));
}

TEST_CASE("config hash distinguishes different configs") {
  json a = valid_config();
  json b = valid_config();
  b["seed"] = 43;
  REQUIRE(config_hash(a) == config_hash(valid_config()));
  REQUIRE(config_hash(a) != config_hash(b));
}

TEST_CASE("solution and certificate serialization carry the named fields") {
  ChainSolution sol;
  sol.xi = Eigen::VectorXd::Constant(2, 0.5);
  sol.mean = 0.25;
  sol.rhat = Eigen::VectorXd::Zero(2);
  sol.sigma2 = 1.5;
  sol.varrho = -0.5;
  sol.tau1 = 0.7;
  json sj = to_json(sol);
  REQUIRE(sj["mean"] == 0.25);
  REQUIRE(sj["sigma2"] == 1.5);
  REQUIRE(sj["varrho"] == -0.5);
  REQUIRE(sj["tau1"] == 0.7);
  REQUIRE(sj["xi"].size() == 2);

  EstimationCertificate cert;
  cert.eps1 = 0.01;
  cert.n2 = 12;
  cert.c1_ok = true;
  json cj = to_json(cert);
  REQUIRE(cj["eps1"] == 0.01);
  REQUIRE(cj["n2"] == 12);
  REQUIRE(cj["c1_ok"] == true);
  REQUIRE(cj.contains("kappa"));
  REQUIRE(cj.contains("varsigma_tilde"));
}
