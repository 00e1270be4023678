#pragma once

// Seeded sweeps over sensor instances: D-Bay at each budget against equidistant grids,
// both measured relative to a fine-grid reference optimum.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dbay/baselines.hpp"
#include "dbay/protocol.hpp"
#include "dbay/pseudo_tree.hpp"
#include "dbay/runtime.hpp"
#include "dbay/sensor.hpp"

namespace dbay {

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds;
  SensorParams sensor;
  std::vector<std::size_t> budgets;
  std::size_t grid_k_max = 60;   // grid curve covers k = 2..grid_k_max
  std::size_t reference_k = 720;
  AcquisitionParams acquisition;
  KeyPolicy key_policy = KeyPolicy::separator;
  LipschitzCheck lipschitz_check = LipschitzCheck::leaves;
  std::size_t jobs = 1;
};

struct ExperimentRecord {
  std::uint64_t seed = 0;
  std::string solver;  // "dbay" or "grid"
  std::size_t budget_or_k = 0;
  double achieved = 0.0;
  double reference = 0.0;
  double relative = 0.0;
  std::size_t samples = 0;
  std::size_t messages = 0;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<ExperimentRecord> records;
  std::map<std::size_t, double> grid_relative;  // k -> relative utility
  std::map<std::size_t, std::string> trace_digest;  // budget -> D-Bay trace digest
};

struct ExperimentResult {
  std::vector<ExperimentRecord> records;
  std::map<std::size_t, double> dbay_curve;  // budget -> mean relative utility
  std::map<std::size_t, double> grid_curve;  // k -> mean relative utility
  std::vector<Efficiency> efficiency;
  std::vector<SeedOutcome> seeds;
};

inline RunSettings dbay_settings(std::size_t budget, const ExperimentConfig& config) {
  RunSettings s;
  s.defaults.budget = budget;
  s.defaults.sampling = BayesianSampling{config.acquisition};
  s.defaults.key_policy = config.key_policy;
  s.defaults.lipschitz_check = config.lipschitz_check;
  s.keep_trace = false;
  return s;
}

inline SeedOutcome run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  const SensorProblem problem = generate_problem(seed, config.sensor);
  const DcopInstance instance = compile(problem);
  const PseudoTree dbay_tree = prepare_pseudo_tree(instance);
  const PseudoTree dpop_tree = dpop_pseudo_tree(instance);
  DpopOptions dpop;
  dpop.tree = &dpop_tree;
  const double reference = dpop_solve(instance, Grid::equidistant(instance, config.reference_k), dpop).utility;

  auto grid_utility = [&](std::size_t k) {
    return dpop_solve(instance, Grid::equidistant(instance, k), dpop).utility;
  };
  std::map<std::size_t, double> grid_achieved;
  for (std::size_t k = 2; k <= config.grid_k_max; ++k) {
    grid_achieved[k] = grid_utility(k);
    out.grid_relative[k] = relative_utility(grid_achieved[k], reference);
  }
  for (std::size_t b : config.budgets) {
    const RunResult run = run_to_completion(instance, dbay_tree, dbay_settings(b, config), seed);
    out.trace_digest[b] = run.trace.digest_hex();
    out.records.push_back({seed, "dbay", b, run.utility, reference,
                           relative_utility(run.utility, reference), run.metrics.total_samples(),
                           run.metrics.total_messages()});
    const auto it = grid_achieved.find(b);
    const double g = it != grid_achieved.end() ? it->second : grid_utility(b);
    out.records.push_back({seed, "grid", b, g, reference, relative_utility(g, reference),
                           b * instance.variable_count(), 0});
  }
  return out;
}

/// Seeds run on up to `jobs` threads; results are assembled in seed order, so output does
/// not depend on the thread count.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  for (std::size_t b : config.budgets) {
    if (b < 3) throw Error(Errc::invalid_instance, "budgets must be at least 3");
  }
  ExperimentResult result;
  result.seeds.resize(config.seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= config.seeds.size()) return;
      try {
        result.seeds[i] = run_seed(config, config.seeds[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = config.seeds.size();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, config.seeds.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::map<std::size_t, double> dbay_sum;
  for (const auto& s : result.seeds) {
    result.records.insert(result.records.end(), s.records.begin(), s.records.end());
    for (const auto& r : s.records) {
      if (r.solver == "dbay") dbay_sum[r.budget_or_k] += r.relative;
    }
    for (const auto& [k, g] : s.grid_relative) result.grid_curve[k] += g;
  }
  const double n = static_cast<double>(config.seeds.size());
  for (auto& [b, v] : dbay_sum) result.dbay_curve[b] = v / n;
  for (auto& [k, v] : result.grid_curve) v /= n;
  if (!result.grid_curve.empty()) result.efficiency = sample_efficiency(result.dbay_curve, result.grid_curve);
  return result;
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_records_csv(std::ostream& os, const std::vector<ExperimentRecord>& records) {
  os << "seed,solver,budget_or_k,achieved,reference,relative,samples,messages\n";
  for (const auto& r : records) {
    os << r.seed << ',' << r.solver << ',' << r.budget_or_k << ',' << format_number(r.achieved) << ','
       << format_number(r.reference) << ',' << format_number(r.relative) << ',' << r.samples << ','
       << r.messages << '\n';
  }
}

/// Mean relative utility per budget for D-Bay and the grid at k = budget.
inline void write_relative_utility(std::ostream& os, const ExperimentResult& result) {
  os << "budget,dbay_relative,grid_relative\n";
  for (const auto& [b, d] : result.dbay_curve) {
    double g = 0.0;
    std::size_t count = 0;
    for (const auto& r : result.records) {
      if (r.solver == "grid" && r.budget_or_k == b) {
        g += r.relative;
        ++count;
      }
    }
    os << b << ',' << format_number(d) << ',' << format_number(count ? g / static_cast<double>(count) : 0.0)
       << '\n';
  }
}

/// Grid samples per domain needed to match D-Bay's mean relative utility.
inline void write_sample_efficiency(std::ostream& os, const ExperimentResult& result) {
  os << "budget,grid_samples,censored\n";
  for (const auto& e : result.efficiency) {
    os << e.budget << ',' << e.k << (e.censored ? "+" : "") << ',' << (e.censored ? 1 : 0) << '\n';
  }
}

inline void write_grid_curve(std::ostream& os, const ExperimentResult& result) {
  os << "k,grid_relative\n";
  for (const auto& [k, g] : result.grid_curve) os << k << ',' << format_number(g) << '\n';
}

}  // namespace dbay
