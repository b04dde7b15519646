// Experiment CLI: generate and validate linear MDP files, run the replicable
// RL algorithms, measure paired-run replicability, and evaluate serialized
// policies against the exact DP oracle. One structured config file per
// invocation; --set overrides individual keys.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "replin/harness.hpp"

using nlohmann::json;
using namespace replin;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  unsigned jobs = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

json load_config(const GlobalArgs& args) {
  json cfg = json::parse(read_text_file(args.config_path));
  for (const std::string& kv : args.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got: " + kv);
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;  // unquoted strings pass through
    }
    json* node = &cfg;
    std::size_t pos = 0;
    while (true) {
      const std::size_t dot = path.find('.', pos);
      const std::string key = path.substr(pos, dot - pos);
      if (key.empty()) throw std::runtime_error("--set: empty key in " + path);
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      node = &(*node)[key];
      pos = dot + 1;
    }
  }
  if (!cfg.is_object() || cfg.value("schema", "") != "replin-config/v1")
    throw std::runtime_error("config must declare schema replin-config/v1");
  return cfg;
}

void require_keys(const json& obj, const std::vector<std::string>& allowed,
                  const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const std::string& a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw std::runtime_error("unknown config key \"" + key + "\" in " + where);
  }
}

std::string out_path(const GlobalArgs& args, const std::string& rel) {
  if (args.out_dir.empty() || rel.empty() || rel.front() == '/') return rel;
  return args.out_dir + "/" + rel;
}

Vector parse_vector(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw std::runtime_error(where + " must be an array");
  Vector v;
  for (const json& x : arr) v.push_back(x.get<double>());
  return v;
}

// ---- MDP resolution: a file reference or inline generation parameters. ----

LinearMDPSpec resolve_mdp(const json& cfg, const GlobalArgs& args,
                          bool apply_seed) {
  if (cfg.contains("mdp_file"))
    return load_mdp(cfg["mdp_file"].get<std::string>());
  if (!cfg.contains("mdp"))
    throw std::runtime_error("config needs either mdp_file or an mdp block");
  const json& m = cfg["mdp"];
  require_keys(m,
               {"states", "actions", "horizon", "feature_dim", "seed",
                "feature_concentration", "mu_point_mass", "q_point_mass",
                "sibling_states", "sibling_mix"},
               "mdp");
  MdpGenOptions opt;
  opt.feature_concentration = m.value("feature_concentration", 1.0);
  opt.mu_point_mass = m.value("mu_point_mass", 0.0);
  opt.q_point_mass = m.value("q_point_mass", 0.0);
  opt.sibling_states = m.value("sibling_states", false);
  opt.sibling_mix = m.value("sibling_mix", 1e-3);
  std::uint64_t seed = m.value("seed", std::uint64_t{0});
  if (apply_seed && args.seed_given) seed = args.seed;
  return generate_mdp(m.at("states").get<std::size_t>(),
                      m.at("actions").get<std::size_t>(),
                      m.at("horizon").get<std::size_t>(),
                      m.at("feature_dim").get<std::size_t>(), seed, opt);
}

LsviConfig parse_lsvi(const json& j) {
  require_keys(j,
               {"epsilon", "delta", "rho", "schedule_constant",
                "samples_override", "lambda_override"},
               "lsvi");
  LsviConfig c;
  c.epsilon = j.value("epsilon", c.epsilon);
  c.delta = j.value("delta", c.delta);
  c.rho = j.value("rho", c.rho);
  c.schedule_constant = j.value("schedule_constant", c.schedule_constant);
  c.samples_override = j.value("samples_override", c.samples_override);
  c.lambda_override = j.value("lambda_override", c.lambda_override);
  return c;
}

UcbConfig parse_ucb(const json& j) {
  require_keys(j,
               {"epsilon", "delta", "rho", "schedule_constant",
                "rounds_override", "trajectories_override", "beta_override",
                "lambda_override", "delta_w_override", "delta_lambda_override",
                "rho_est_override", "delta_est_override", "enable_rounding",
                "bonus_only_init"},
               "ucb");
  UcbConfig c;
  c.epsilon = j.value("epsilon", c.epsilon);
  c.delta = j.value("delta", c.delta);
  c.rho = j.value("rho", c.rho);
  c.schedule_constant = j.value("schedule_constant", c.schedule_constant);
  c.rounds_override = j.value("rounds_override", c.rounds_override);
  c.trajectories_override =
      j.value("trajectories_override", c.trajectories_override);
  c.beta_override = j.value("beta_override", c.beta_override);
  c.lambda_override = j.value("lambda_override", c.lambda_override);
  c.delta_w_override = j.value("delta_w_override", c.delta_w_override);
  c.delta_lambda_override =
      j.value("delta_lambda_override", c.delta_lambda_override);
  c.rho_est_override = j.value("rho_est_override", c.rho_est_override);
  c.delta_est_override = j.value("delta_est_override", c.delta_est_override);
  c.enable_rounding = j.value("enable_rounding", c.enable_rounding);
  c.bonus_only_init = j.value("bonus_only_init", c.bonus_only_init);
  return c;
}

RidgeConfig parse_ridge_cfg(const json& j) {
  require_keys(j, {"lambda", "epsilon", "delta", "rho", "weight_bound"},
               "regression.cfg");
  RidgeConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.delta = j.value("delta", c.delta);
  c.rho = j.value("rho", c.rho);
  c.weight_bound = j.value("weight_bound", c.weight_bound);
  return c;
}

AlgorithmId parse_algorithm(const std::string& name) {
  if (name == "ridge") return AlgorithmId::kRidge;
  if (name == "cov") return AlgorithmId::kCov;
  if (name == "generative") return AlgorithmId::kGenerative;
  if (name == "ucb") return AlgorithmId::kUcb;
  throw std::runtime_error("unknown algorithm: " + name);
}

// Policy files may hold several concatenated policies (one per round).
std::vector<LinearPolicy> parse_policy_list(const std::string& text) {
  const std::string marker = "linear-policy v1";
  std::vector<std::size_t> starts;
  for (std::size_t pos = text.find(marker); pos != std::string::npos;
       pos = text.find(marker, pos + marker.size()))
    starts.push_back(pos);
  if (starts.empty())
    throw std::runtime_error("no linear-policy sections in policy file");
  std::vector<LinearPolicy> out;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t end =
        (i + 1 < starts.size()) ? starts[i + 1] : text.size();
    out.push_back(parse_policy(text.substr(starts[i], end - starts[i])));
  }
  return out;
}

// ---- Subcommands. ----

int cmd_generate_mdp(const GlobalArgs& args) {
  json cfg = load_config(args);
  require_keys(cfg, {"schema", "mdp", "output"}, "generate-mdp config");
  LinearMDPSpec spec = resolve_mdp(cfg, args, true);
  const auto violations = validate_mdp(spec);
  if (!violations.empty()) {
    for (const std::string& v : violations) std::cerr << "violation: " << v << "\n";
    return 1;
  }
  const std::string path = out_path(args, cfg.at("output").get<std::string>());
  save_mdp(spec, path);
  std::cout << "wrote " << path << ": S=" << spec.num_states
            << " A=" << spec.num_actions << " H=" << spec.horizon
            << " d=" << spec.feature_dim << " (valid)\n";
  return 0;
}

int cmd_validate(const GlobalArgs& args) {
  json cfg = load_config(args);
  require_keys(cfg, {"schema", "mdp_file"}, "validate config");
  LinearMDPSpec spec = load_mdp(cfg.at("mdp_file").get<std::string>());
  const auto violations = validate_mdp(spec);
  for (const std::string& v : violations) std::cout << "violation: " << v << "\n";
  std::cout << (violations.empty() ? "valid" : "invalid") << "\n";
  return violations.empty() ? 0 : 1;
}

int cmd_run(const GlobalArgs& args) {
  json cfg = load_config(args);
  require_keys(cfg,
               {"schema", "algorithm", "mdp", "mdp_file", "internal_seed",
                "env_seed", "lsvi", "ucb", "policy_output", "metrics_output"},
               "run config");
  const std::string alg = cfg.at("algorithm").get<std::string>();
  LinearMDPSpec spec = resolve_mdp(cfg, args, false);
  std::uint64_t internal_seed = cfg.value("internal_seed", std::uint64_t{1});
  if (args.seed_given) internal_seed = args.seed;
  const std::uint64_t env_seed = cfg.value("env_seed", std::uint64_t{2});
  SharedRandomness internal(internal_seed), env(env_seed);

  std::vector<LinearPolicy> policies;
  if (alg == "generative") {
    CoreSet cs = build_coreset(spec);
    policies.push_back(r_lsvi_generative(
        spec, cs, parse_lsvi(cfg.value("lsvi", json::object())), internal, env));
  } else if (alg == "ucb") {
    policies =
        r_lsvi_ucb(spec, parse_ucb(cfg.value("ucb", json::object())), internal, env);
  } else {
    throw std::runtime_error("run supports algorithms generative and ucb");
  }

  const TabularSolution oracle = solve_exact(spec);
  const double v_star = oracle.value_at(spec.initial_dist);
  json metrics;
  metrics["schema"] = "run-metrics/v1";
  metrics["algorithm"] = alg;
  metrics["optimal_value"] = v_star;
  json values = json::array();
  for (const LinearPolicy& p : policies) values.push_back(policy_value(p, spec));
  metrics["policy_values"] = values;
  metrics["mixture_value"] = mixture_value(policies, spec);

  if (cfg.contains("policy_output")) {
    std::string body;
    for (const LinearPolicy& p : policies) body += serialize_policy(p);
    write_text_file(out_path(args, cfg["policy_output"].get<std::string>()), body);
  }
  if (cfg.contains("metrics_output"))
    write_text_file(out_path(args, cfg["metrics_output"].get<std::string>()),
                    metrics.dump(2) + "\n");
  std::cout << "policies=" << policies.size()
            << " mixture_value=" << fmt_full(metrics["mixture_value"].get<double>())
            << " optimal_value=" << fmt_full(v_star) << "\n";
  return 0;
}

TrialPlan build_plan(const json& cfg, const GlobalArgs& args) {
  TrialPlan plan;
  plan.algorithm = parse_algorithm(cfg.at("algorithm").get<std::string>());
  plan.num_pairs = cfg.value("pairs", std::size_t{1});
  plan.master_seed = cfg.value("master_seed", std::uint64_t{1});
  if (args.seed_given) plan.master_seed = args.seed;
  plan.env_seed = cfg.value("env_seed", std::uint64_t{2});
  plan.shared_env = cfg.value("shared_env", false);

  if (plan.algorithm == AlgorithmId::kRidge) {
    const json& r = cfg.at("regression");
    require_keys(r, {"dim", "theta", "noise_bound", "num_samples", "cfg"},
                 "regression");
    plan.regression.dim = r.at("dim").get<std::size_t>();
    plan.regression.theta = parse_vector(r.at("theta"), "regression.theta");
    if (plan.regression.theta.size() != plan.regression.dim)
      throw std::runtime_error("regression.theta length must equal dim");
    plan.regression.noise_bound = r.value("noise_bound", 0.1);
    plan.regression.num_samples = r.value("num_samples", std::size_t{100});
    plan.regression.cfg = parse_ridge_cfg(r.value("cfg", json::object()));
  } else if (plan.algorithm == AlgorithmId::kCov) {
    const json& m = cfg.at("moment");
    require_keys(m, {"dim", "epsilon", "delta", "rho", "num_blocks",
                     "block_size"},
                 "moment");
    plan.moment.dim = m.at("dim").get<std::size_t>();
    plan.moment.cfg.epsilon = m.value("epsilon", 0.1);
    plan.moment.cfg.delta = m.value("delta", 0.01);
    plan.moment.cfg.rho = m.value("rho", 0.1);
    plan.moment.cfg.num_blocks = m.value("num_blocks", std::size_t{1});
    plan.moment.cfg.block_size = m.value("block_size", std::size_t{1});
    // Uniform over the standard basis: true second moment is I/d.
    plan.moment.true_moment = Matrix(plan.moment.dim, plan.moment.dim);
    for (std::size_t i = 0; i < plan.moment.dim; ++i)
      plan.moment.true_moment(i, i) =
          static_cast<double>(plan.moment.cfg.num_blocks) /
          static_cast<double>(plan.moment.dim);
  } else {
    plan.mdp = resolve_mdp(cfg, args, false);
    if (plan.algorithm == AlgorithmId::kGenerative) {
      plan.coreset = build_coreset(plan.mdp);
      plan.lsvi = parse_lsvi(cfg.value("lsvi", json::object()));
    } else {
      plan.ucb = parse_ucb(cfg.value("ucb", json::object()));
    }
  }
  return plan;
}

int cmd_replicability(const GlobalArgs& args) {
  json cfg = load_config(args);
  require_keys(cfg,
               {"schema", "algorithm", "pairs", "master_seed", "env_seed",
                "shared_env", "regression", "moment", "mdp", "mdp_file",
                "lsvi", "ucb", "sweep", "csv_output", "json_output"},
               "replicability config");
  TrialPlan plan = build_plan(cfg, args);

  std::string csv;
  json out;
  if (cfg.contains("sweep")) {
    const json& sw = cfg["sweep"];
    require_keys(sw, {"parameter", "values"}, "sweep");
    const std::string param = sw.at("parameter").get<std::string>();
    const std::vector<double> values =
        sw.at("values").get<std::vector<double>>();
    auto entries = sweep(plan, param, values, args.jobs);
    out["schema"] = "sweep-report/v1";
    out["parameter"] = param;
    json jentries = json::array();
    for (const SweepEntry& e : entries) {
      csv += "sweep," + param + "," + fmt_full(e.value) + "\n";
      csv += report_to_csv(e.report);
      json je;
      je["value"] = e.value;
      je["report"] = report_to_json(e.report);
      jentries.push_back(std::move(je));
      std::cout << param << "=" << fmt_full(e.value) << " rate="
                << fmt_full(e.report.replicability_rate) << " mean_error="
                << fmt_full(e.report.mean_error) << "\n";
    }
    out["entries"] = std::move(jentries);
  } else {
    PairedRunReport report = run_paired_trials(plan, args.jobs);
    csv = report_to_csv(report);
    out = report_to_json(report);
    std::cout << "pairs=" << report.pairs.size() << " rate="
              << fmt_full(report.replicability_rate) << " mean_error="
              << fmt_full(report.mean_error) << "\n";
  }
  if (cfg.contains("csv_output"))
    write_text_file(out_path(args, cfg["csv_output"].get<std::string>()), csv);
  if (cfg.contains("json_output"))
    write_text_file(out_path(args, cfg["json_output"].get<std::string>()),
                    out.dump(2) + "\n");
  return 0;
}

int cmd_eval(const GlobalArgs& args) {
  json cfg = load_config(args);
  require_keys(cfg, {"schema", "policy_file", "mdp_file", "output"},
               "eval config");
  LinearMDPSpec spec = load_mdp(cfg.at("mdp_file").get<std::string>());
  const auto policies =
      parse_policy_list(read_text_file(cfg.at("policy_file").get<std::string>()));

  json out;
  out["schema"] = "eval-report/v1";
  json values = json::array();
  json per_state = json::array();
  for (const LinearPolicy& p : policies) {
    const auto v = evaluate_policy(spec, action_table(p, spec));
    values.push_back(dot(v[0], spec.initial_dist));
    per_state.push_back(v[0]);
  }
  out["policy_values"] = values;
  out["per_state_values"] = per_state;
  out["mixture_value"] = mixture_value(policies, spec);
  for (std::size_t i = 0; i < policies.size(); ++i) {
    std::cout << "policy " << i << " value "
              << fmt_full(values[i].get<double>()) << " per-state";
    for (const json& v : per_state[i]) std::cout << ' ' << fmt_full(v.get<double>());
    std::cout << "\n";
  }
  std::cout << "mixture_value=" << fmt_full(out["mixture_value"].get<double>())
            << "\n";
  if (cfg.contains("output"))
    write_text_file(out_path(args, cfg["output"].get<std::string>()),
                    out.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"replicable linear RL experiments"};
  app.require_subcommand(1);
  GlobalArgs args;

  auto add_common = [&args](CLI::App* sub, bool takes_seed) {
    sub->add_option("--config", args.config_path, "config file path")
        ->required();
    sub->add_option("--set", args.sets, "override config key (key=value)");
    sub->add_option("--out", args.out_dir, "output directory for written files");
    sub->add_option("--jobs", args.jobs, "worker threads for paired trials");
    if (takes_seed)
      sub->add_option("--seed", args.seed, "override the primary seed")
          ->each([&args](const std::string&) { args.seed_given = true; });
  };

  CLI::App* gen = app.add_subcommand("generate-mdp", "generate a linear MDP file");
  CLI::App* val = app.add_subcommand("validate", "validate a linear MDP file");
  CLI::App* run = app.add_subcommand("run", "run one algorithm instance");
  CLI::App* rep = app.add_subcommand("replicability", "paired-run measurement");
  CLI::App* ev = app.add_subcommand("eval", "evaluate a policy file exactly");
  add_common(gen, true);
  add_common(val, false);
  add_common(run, true);
  add_common(rep, true);
  add_common(ev, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_generate_mdp(args);
    if (val->parsed()) return cmd_validate(args);
    if (run->parsed()) return cmd_run(args);
    if (rep->parsed()) return cmd_replicability(args);
    if (ev->parsed()) return cmd_eval(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
