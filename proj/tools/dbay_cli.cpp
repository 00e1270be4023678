// dbay: solve sensor/problem-file instances with D-Bay, run benchmark sweeps, run the
// oracle cross-checks and replay traces.
//
// Exit codes: 0 success, 1 solver error, 2 configuration error.
// Configuration precedence: command-line flags > environment > --config JSON file.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dbay/dbay.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  std::string problem;  // problem file; empty = generated sensor instance
  std::uint64_t seed = 1;
  std::size_t sensors = 6;
  std::size_t targets = 12;
  double range = 1.0;
  double beta = 36.0;
  bool no_wrap = false;
  std::size_t budget = 10;
  std::string budgets = "3..20";
  std::size_t seeds = 30;
  std::uint64_t first_seed = 1;
  std::size_t grid_k_max = 60;
  std::size_t reference_k = 720;
  double xi = 0.0;
  std::string sampler = "bo";  // bo | grid
  std::string key_policy = "separator";
  std::string lipschitz_check = "leaves";
  double lipschitz = 0.0;  // > 0 overrides every agent's normalized constant
  double tie_tolerance = dbay::kTieTolerance;
  std::string output_dir = "results";
  std::size_t jobs = 1;
  bool no_trace = false;
};

// One entry per configurable key: reads it from JSON and copies it between configs.
struct Field {
  std::string name;
  std::function<void(const json&, CliConfig&)> from_json;
  std::function<void(const CliConfig&, CliConfig&)> copy;
  std::function<json(const CliConfig&)> to_json;
};

template <typename T>
Field field(std::string name, T CliConfig::*member) {
  return {name,
          [member, name](const json& j, CliConfig& c) {
            try {
              c.*member = j.get<T>();
            } catch (const json::exception&) {
              throw ConfigError("config key '" + name + "' has the wrong type");
            }
          },
          [member](const CliConfig& src, CliConfig& dst) { dst.*member = src.*member; },
          [member](const CliConfig& c) { return json(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      field("problem", &CliConfig::problem),
      field("seed", &CliConfig::seed),
      field("sensors", &CliConfig::sensors),
      field("targets", &CliConfig::targets),
      field("range", &CliConfig::range),
      field("beta", &CliConfig::beta),
      field("no-wrap", &CliConfig::no_wrap),
      field("budget", &CliConfig::budget),
      field("budgets", &CliConfig::budgets),
      field("seeds", &CliConfig::seeds),
      field("first-seed", &CliConfig::first_seed),
      field("grid-k-max", &CliConfig::grid_k_max),
      field("reference-k", &CliConfig::reference_k),
      field("xi", &CliConfig::xi),
      field("sampler", &CliConfig::sampler),
      field("key-policy", &CliConfig::key_policy),
      field("lipschitz-check", &CliConfig::lipschitz_check),
      field("lipschitz", &CliConfig::lipschitz),
      field("tie-tolerance", &CliConfig::tie_tolerance),
      field("output-dir", &CliConfig::output_dir),
      field("jobs", &CliConfig::jobs),
      field("no-trace", &CliConfig::no_trace),
  };
  return all;
}

json config_to_json(const CliConfig& c) {
  json j = json::object();
  for (const auto& f : fields()) j[f.name] = f.to_json(c);
  return j;
}

CliConfig config_from_json(const json& j, CliConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return f.name == key; });
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->from_json(value, base);
  }
  return base;
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  auto number = [&](const std::string& s) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + s + "' in list '" + text + "'");
    }
  };
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(number(item));
    } else {
      const auto lo = number(item.substr(0, dots));
      const auto hi = number(item.substr(dots + 2));
      if (lo > hi) throw ConfigError("empty range '" + item + "'");
      for (auto v = lo; v <= hi; ++v) out.push_back(v);
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

dbay::KeyPolicy parse_key_policy(const std::string& s) {
  if (s == "separator") return dbay::KeyPolicy::separator;
  if (s == "full") return dbay::KeyPolicy::full_ancestors;
  throw ConfigError("key-policy must be separator or full");
}

dbay::LipschitzCheck parse_check(const std::string& s) {
  if (s == "off") return dbay::LipschitzCheck::off;
  if (s == "leaves") return dbay::LipschitzCheck::leaves;
  if (s == "all") return dbay::LipschitzCheck::all;
  throw ConfigError("lipschitz-check must be off, leaves or all");
}

void validate(const CliConfig& c, bool sweep) {
  if (c.budget < 3 && c.sampler == "bo") throw ConfigError("budget must be at least 3 (bootstrap samples)");
  if (c.budget < 1) throw ConfigError("budget must be positive");
  if (c.sampler != "bo" && c.sampler != "grid") throw ConfigError("sampler must be bo or grid");
  if (c.sensors == 0 || c.targets == 0) throw ConfigError("sensors and targets must be positive");
  if (!(c.range > 0.0) || !(c.beta > 0.0)) throw ConfigError("range and beta must be positive");
  if (!(c.xi >= 0.0)) throw ConfigError("xi must be >= 0");
  if (!(c.lipschitz >= 0.0)) throw ConfigError("lipschitz must be >= 0");
  if (c.jobs == 0) throw ConfigError("jobs must be positive");
  parse_key_policy(c.key_policy);
  parse_check(c.lipschitz_check);
  if (sweep) {
    for (auto b : parse_list(c.budgets)) {
      if (b < 3) throw ConfigError("budgets must be at least 3 (bootstrap samples)");
    }
    if (c.seeds == 0) throw ConfigError("seeds must be positive");
    if (c.grid_k_max < 2) throw ConfigError("grid-k-max must be at least 2");
    if (c.reference_k < c.grid_k_max) throw ConfigError("reference-k must be >= grid-k-max");
  }
}

dbay::SensorParams sensor_params(const CliConfig& c) {
  return {c.sensors, c.targets, c.range, c.beta, !c.no_wrap};
}

dbay::DcopInstance build_instance(const CliConfig& c) {
  if (!c.problem.empty()) return dbay::load_instance(c.problem);
  return dbay::compile(dbay::generate_problem(c.seed, sensor_params(c)));
}

dbay::RunSettings run_settings(const CliConfig& c) {
  dbay::RunSettings s;
  s.defaults.budget = c.budget;
  if (c.sampler == "grid") {
    s.defaults.sampling = dbay::GridSampling{c.budget};
  } else {
    s.defaults.sampling = dbay::BayesianSampling{{c.xi}};
  }
  s.defaults.key_policy = parse_key_policy(c.key_policy);
  s.defaults.lipschitz_check = parse_check(c.lipschitz_check);
  if (c.lipschitz > 0.0) s.defaults.lipschitz = c.lipschitz;
  s.keep_trace = !c.no_trace;
  return s;
}

fs::path prepare_output(const CliConfig& c) {
  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  return out;
}

std::string join_assignment(const dbay::Assignment& a) {
  std::string s = "[";
  for (std::size_t v = 0; v < a.size(); ++v) s += (v ? "," : "") + dbay::format_number(a.at(v));
  return s + "]";
}

struct SolveOutput {
  dbay::RunResult run;
  std::optional<double> reference;
  json header;
};

SolveOutput solve(const CliConfig& c, const dbay::DcopInstance& instance) {
  const auto tree = dbay::prepare_pseudo_tree(instance);
  SolveOutput out;
  out.run = dbay::run_to_completion(instance, tree, run_settings(c), c.seed);
  out.header = {{"config", config_to_json(c)}, {"problem", dbay::instance_to_json(instance)}};
  out.run.trace.header = out.header;
  if (c.reference_k > 0) {
    dbay::DpopOptions opts;
    opts.tie_tolerance = c.tie_tolerance;
    out.reference = dbay::dpop_solve(instance, dbay::Grid::equidistant(instance, c.reference_k), opts).utility;
  }
  return out;
}

int cmd_solve(const CliConfig& c) {
  validate(c, false);
  const auto instance = build_instance(c);
  const auto dir = prepare_output(c);
  const auto out = solve(c, instance);
  const auto& m = out.run.metrics;
  std::ostringstream line;
  line << "utility=" << dbay::format_number(out.run.utility);
  if (out.reference) {
    line << " reference=" << dbay::format_number(*out.reference)
         << " relative=" << dbay::format_number(dbay::relative_utility(out.run.utility, *out.reference));
  }
  line << " samples=" << m.total_samples() << " messages=" << m.total_messages()
       << " sample_msgs=" << m.messages(dbay::MessageKind::sample)
       << " utility_msgs=" << m.messages(dbay::MessageKind::utility)
       << " final_msgs=" << m.messages(dbay::MessageKind::final_assignment)
       << " evaluations=" << m.utility_evaluations << " assignment=" << join_assignment(out.run.assignment)
       << " trace_digest=" << out.run.trace.digest_hex();
  std::cout << line.str() << '\n';
  std::cerr << "wall_time=" << m.wall_time.count() << "s\n";

  json result = {{"utility", out.run.utility},
                 {"assignment", json::array()},
                 {"samples_per_agent", m.samples_per_agent},
                 {"messages", {{"sample", m.messages(dbay::MessageKind::sample)},
                               {"utility", m.messages(dbay::MessageKind::utility)},
                               {"final", m.messages(dbay::MessageKind::final_assignment)}}},
                 {"utility_evaluations", m.utility_evaluations},
                 {"trace_digest", out.run.trace.digest_hex()}};
  for (std::size_t v = 0; v < out.run.assignment.size(); ++v) result["assignment"].push_back(out.run.assignment.at(v));
  if (out.reference) result["reference"] = *out.reference;
  auto rf = open_out(dir / "solve.json");
  rf << result.dump(2) << '\n';
  if (!c.no_trace) {
    auto tf = open_out(dir / "trace.ndjson");
    out.run.trace.write(tf);
  }
  return 0;
}

int cmd_sweep(const CliConfig& c) {
  validate(c, true);
  if (!c.problem.empty()) throw ConfigError("sweep generates sensor instances; --problem is not accepted");
  const auto dir = prepare_output(c);
  dbay::ExperimentConfig e;
  for (std::size_t i = 0; i < c.seeds; ++i) e.seeds.push_back(c.first_seed + i);
  e.sensor = sensor_params(c);
  e.budgets = parse_list(c.budgets);
  e.grid_k_max = c.grid_k_max;
  e.reference_k = c.reference_k;
  e.acquisition.xi = c.xi;
  e.key_policy = parse_key_policy(c.key_policy);
  e.lipschitz_check = parse_check(c.lipschitz_check);
  e.jobs = c.jobs;
  const auto result = dbay::run_experiment(e);
  {
    auto f = open_out(dir / "results.csv");
    dbay::write_records_csv(f, result.records);
  }
  {
    auto f = open_out(dir / "relative_utility.csv");
    dbay::write_relative_utility(f, result);
  }
  {
    auto f = open_out(dir / "sample_efficiency.csv");
    dbay::write_sample_efficiency(f, result);
  }
  {
    auto f = open_out(dir / "grid_curve.csv");
    dbay::write_grid_curve(f, result);
  }
  {
    auto f = open_out(dir / "traces.csv");
    f << "seed,budget,trace_digest\n";
    for (const auto& s : result.seeds) {
      for (const auto& [b, d] : s.trace_digest) f << s.seed << ',' << b << ',' << d << '\n';
    }
  }
  std::cout << "budget dbay grid grid_samples_to_match\n";
  for (const auto& eff : result.efficiency) {
    double g = 0.0;
    std::size_t n = 0;
    for (const auto& r : result.records) {
      if (r.solver == "grid" && r.budget_or_k == eff.budget) {
        g += r.relative;
        ++n;
      }
    }
    std::cout << eff.budget << ' ' << dbay::format_number(result.dbay_curve.at(eff.budget)) << ' '
              << dbay::format_number(n ? g / static_cast<double>(n) : 0.0) << ' ' << eff.k
              << (eff.censored ? "+" : "") << '\n';
  }
  std::cout << "wrote " << (dir / "results.csv").string() << '\n';
  return 0;
}

int cmd_verify() {
  bool ok = true;
  for (const auto& r : dbay::run_all_checks()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << " t=" << r.seconds << "s\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace " + path);
  const auto recorded = dbay::Trace::read(in);
  CliConfig c;
  dbay::DcopInstance instance = [&] {
    try {
      c = config_from_json(recorded.header.at("config"));
      return dbay::instance_from_json(recorded.header.at("problem"));
    } catch (const json::exception& e) {
      throw dbay::Error(dbay::Errc::parse_error, std::string("trace header: ") + e.what());
    }
  }();
  c.no_trace = false;
  c.reference_k = 0;
  const auto tree = dbay::prepare_pseudo_tree(instance);
  const auto rerun = dbay::run_to_completion(instance, tree, run_settings(c), c.seed);
  const auto diff = dbay::Trace::first_difference(recorded, rerun.trace);
  if (diff < 0 && recorded.digest() == rerun.trace.digest()) {
    std::cout << "replay identical: " << rerun.trace.size() << " envelopes, digest " << rerun.trace.digest_hex()
              << '\n';
    return 0;
  }
  std::cout << "replay differs at envelope " << diff << " (recorded " << recorded.size() << ", replayed "
            << rerun.trace.size() << ")\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"D-Bay: distributed Bayesian optimization for continuous DCOPs"};
  app.require_subcommand(1);
  std::string config_file;
  CliConfig flags;
  std::vector<std::pair<CLI::Option*, std::string>> given;

  auto add_common = [&](CLI::App* sub, bool sweep) {
    sub->add_option("--config", config_file, "JSON config file (keys as flag names)");
    auto reg = [&](CLI::Option* o, const std::string& key) { given.emplace_back(o, key); };
    reg(sub->add_option("--seed", flags.seed, "problem seed"), "seed");
    reg(sub->add_option("--sensors", flags.sensors, "number of sensors M"), "sensors");
    reg(sub->add_option("--targets", flags.targets, "number of targets T"), "targets");
    reg(sub->add_option("--range", flags.range, "sensor range l"), "range");
    reg(sub->add_option("--beta", flags.beta, "angle of view beta, degrees"), "beta");
    reg(sub->add_flag("--no-wrap", flags.no_wrap, "do not wrap angle differences at +-180"), "no-wrap");
    reg(sub->add_option("--xi", flags.xi, "EI exploration offset"), "xi");
    reg(sub->add_option("--key-policy", flags.key_policy, "separator | full"), "key-policy");
    reg(sub->add_option("--lipschitz-check", flags.lipschitz_check, "off | leaves | all"), "lipschitz-check");
    reg(sub->add_option("--reference-k", flags.reference_k, "grid size of the reference optimum (0 = skip)"),
        "reference-k");
    reg(sub->add_option("--tie-tolerance", flags.tie_tolerance, "grid solver tie window"), "tie-tolerance");
    reg(sub->add_option("--output-dir", flags.output_dir, "output directory (env DBAY_OUTPUT_DIR)"), "output-dir");
    if (sweep) {
      reg(sub->add_option("--seeds", flags.seeds, "number of seeds"), "seeds");
      reg(sub->add_option("--first-seed", flags.first_seed, "first seed"), "first-seed");
      reg(sub->add_option("--budgets", flags.budgets, "budgets, e.g. 3..20 or 3,5,8"), "budgets");
      reg(sub->add_option("--grid-k-max", flags.grid_k_max, "largest grid size of the efficiency curve"),
          "grid-k-max");
      reg(sub->add_option("--jobs", flags.jobs, "seeds run in parallel"), "jobs");
    } else {
      reg(sub->add_option("--problem", flags.problem, "JSON problem file (default: generated sensor instance)"),
          "problem");
      reg(sub->add_option("--budget", flags.budget, "samples per received sample message"), "budget");
      reg(sub->add_option("--sampler", flags.sampler, "bo | grid (equidistant, k = budget)"), "sampler");
      reg(sub->add_option("--lipschitz", flags.lipschitz, "normalized Lipschitz override for every agent"),
          "lipschitz");
      reg(sub->add_flag("--no-trace", flags.no_trace, "skip the trace file"), "no-trace");
    }
  };
  auto* solve_cmd = app.add_subcommand("solve", "solve one instance with D-Bay");
  add_common(solve_cmd, false);
  auto* sweep_cmd = app.add_subcommand("sweep", "benchmark sweep over seeds and budgets");
  add_common(sweep_cmd, true);
  app.add_subcommand("verify", "run the oracle cross-checks");
  auto* replay_cmd = app.add_subcommand("replay", "re-run a trace and compare envelopes");
  std::string trace_path;
  replay_cmd->add_option("trace", trace_path, "trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto resolve = [&]() {
    CliConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw ConfigError("cannot open config file " + config_file);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError("config file: " + std::string(e.what()));
      }
      c = config_from_json(j, c);
    }
    if (const char* env = std::getenv("DBAY_OUTPUT_DIR"); env && *env) c.output_dir = env;
    for (const auto& [opt, key] : given) {
      if (opt->count() == 0) continue;
      auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return f.name == key; });
      it->copy(flags, c);
    }
    return c;
  };

  try {
    if (app.got_subcommand("solve")) return cmd_solve(resolve());
    if (app.got_subcommand("sweep")) return cmd_sweep(resolve());
    if (app.got_subcommand("verify")) return cmd_verify();
    if (app.got_subcommand("replay")) return cmd_replay(trace_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const dbay::Error& e) {
    std::cerr << "error [" << dbay::module_of(e.code()) << "]";
    if (e.agent()) std::cerr << " agent " << *e.agent();
    std::cerr << ": " << e.what() << '\n';
    return e.code() == dbay::Errc::parse_error ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
