#pragma once

// Randomized oracle cross-checks. Each check draws its own seeded instances and compares
// the library against an independent computation (dense linear algebra, Monte Carlo,
// dense grids, brute-force enumeration).

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dbay/acquisition.hpp"
#include "dbay/baselines.hpp"
#include "dbay/bayes_opt.hpp"
#include "dbay/gp.hpp"
#include "dbay/runtime.hpp"
#include "dbay/sensor.hpp"

namespace dbay {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace verify_detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * detail::unit_uniform(rng);
}

inline std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

/// Continuous piecewise-linear function on [0,1] whose slopes lie in [-L, L].
struct LipschitzFunction {
  std::vector<double> knots;
  std::vector<double> values;

  double operator()(double x) const {
    auto it = std::upper_bound(knots.begin(), knots.end(), x);
    if (it == knots.begin()) return values.front();
    if (it == knots.end()) return values.back();
    const auto i = static_cast<std::size_t>(it - knots.begin());
    const double t = (x - knots[i - 1]) / (knots[i] - knots[i - 1]);
    return values[i - 1] + t * (values[i] - values[i - 1]);
  }
};

inline LipschitzFunction random_lipschitz_function(std::mt19937_64& rng, double lip,
                                                   std::size_t min_pieces = 2,
                                                   std::size_t max_pieces = 12) {
  LipschitzFunction f;
  const std::size_t pieces = uniform_int(rng, min_pieces, max_pieces);
  f.knots = {0.0, 1.0};
  for (std::size_t i = 1; i < pieces; ++i) f.knots.push_back(uniform(rng, 0.0, 1.0));
  std::sort(f.knots.begin(), f.knots.end());
  f.knots.erase(std::unique(f.knots.begin(), f.knots.end()), f.knots.end());
  f.values = {uniform(rng, -1.0, 1.0)};
  for (std::size_t i = 1; i < f.knots.size(); ++i) {
    const double slope = uniform(rng, -lip, lip);
    f.values.push_back(f.values.back() + slope * (f.knots[i] - f.knots[i - 1]));
  }
  return f;
}

/// Boundary points plus `interior` uniform inputs, observed through f.
template <typename F>
ObservationSet observe(std::mt19937_64& rng, const F& f, std::size_t interior) {
  ObservationSet set;
  set.insert(0.0, f(0.0));
  set.insert(1.0, f(1.0));
  while (set.size() < interior + 2) {
    const double x = uniform(rng, 0.0, 1.0);
    if (x > 0.0 && x < 1.0 && !set.contains(x)) set.insert(x, f(x));
  }
  return set;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace verify_detail

/// Interval posterior vs dense posterior on random sets with boundary observations, and the
/// analytic tridiagonal inverse vs the dense Gramian on interior inputs.
inline CheckResult check_posterior_oracle(std::size_t sets = 100, std::uint64_t seed = 1) {
  using namespace verify_detail;
  Stopwatch sw;
  std::mt19937_64 rng(seed);
  double dmu = 0.0, dvar = 0.0, dinv = 0.0;
  for (std::size_t s = 0; s < sets; ++s) {
    const std::size_t size = uniform_int(rng, 3, 20);
    const DirichletKernel kernel(uniform(rng, 0.2, 5.0));
    const auto set = observe(rng, [&](double) { return uniform(rng, -3.0, 3.0); }, size - 2);
    for (int g = 0; g <= 100; ++g) {
      const double x = g / 100.0;
      const auto a = posterior_interval(set, kernel, x);
      const auto b = posterior_dense(set, kernel, x);
      dmu = std::max(dmu, std::abs(a.mean - b.mean));
      dvar = std::max(dvar, std::abs(a.variance - b.variance));
    }
    ObservationSet interior;
    while (interior.size() < size) {
      const double x = uniform(rng, 0.0, 1.0);
      if (x > 0.0 && x < 1.0 && !interior.contains(x)) interior.insert(x, 0.0);
    }
    std::vector<double> xs;
    for (const auto& o : interior.entries()) xs.push_back(o.x);
    const Eigen::MatrixXd k = gramian(xs, kernel);
    const Eigen::MatrixXd inv = tridiagonal_inverse_elements(interior, kernel).dense();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k.rows(), k.cols());
    dinv = std::max(dinv, (k * inv - eye).cwiseAbs().maxCoeff());
  }
  CheckResult r{"posterior oracle", dmu < 1e-8 && dvar < 1e-8 && dinv < 1e-8, "", sw.seconds()};
  r.passed = r.passed && r.seconds < 10.0;
  r.detail = "max|dmu|=" + fmt(dmu) + " max|dvar|=" + fmt(dvar) + " max|KK^-1-I|=" + fmt(dinv);
  return r;
}

/// Closed-form EI against a Monte-Carlo estimate of E[max(f - y+ - xi, 0)].
inline CheckResult check_expected_improvement(std::size_t tuples = 50, std::size_t draws = 1'000'000,
                                              std::uint64_t seed = 2) {
  using namespace verify_detail;
  Stopwatch sw;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t t = 0; t < tuples; ++t) {
    const double mu = uniform(rng, -2.0, 2.0);
    const double sigma = uniform(rng, 0.05, 2.0);
    const double xi = uniform(rng, 0.0, 0.5);
    // Incumbent within 3 sigma of mu - xi; further out no draw improves and the estimate
    // (with its standard error) degenerates to 0.
    const double best = mu - xi + sigma * uniform(rng, -3.0, 3.0);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
      const double gain = std::max(mu + sigma * normal(rng) - best - xi, 0.0);
      sum += gain;
      sum2 += gain * gain;
    }
    const double n = static_cast<double>(draws);
    const double mean = sum / n;
    const double se = std::sqrt(std::max(sum2 / n - mean * mean, 0.0) / n);
    const double q = expected_improvement({mu, sigma * sigma}, best, {xi});
    const double z = se > 0.0 ? std::abs(q - mean) / se : (q == mean ? 0.0 : 1e9);
    worst = std::max(worst, z);
  }
  CheckResult r{"expected improvement", worst <= 3.0, "", sw.seconds()};
  r.passed = r.passed && r.seconds < 60.0;
  r.detail = "worst |q-MC|/SE=" + fmt(worst);
  return r;
}

/// mu + sigma >= upper bound at lambda = L; the bound must fail somewhere at lambda = L/2.
inline CheckResult check_upper_bound_guard(std::size_t sets = 1000, std::uint64_t seed = 3) {
  using namespace verify_detail;
  Stopwatch sw;
  std::mt19937_64 rng(seed);
  double worst = std::numeric_limits<double>::infinity();
  std::size_t violated_half = 0;
  for (std::size_t s = 0; s < sets; ++s) {
    const double lip = uniform(rng, 0.5, 20.0);
    const LipschitzModel model{lip};
    const auto f = random_lipschitz_function(rng, lip);
    const auto set = observe(rng, f, uniform_int(rng, 1, 18));
    const DirichletKernel kernel = kernel_scale_for(model);
    // Adversarial for the half-scale kernel: few observations, so gaps are wide.
    const auto sparse = observe(rng, f, uniform_int(rng, 1, 3));
    const DirichletKernel half(0.5 * lip);
    bool hit = false;
    for (int g = 0; g <= 1000; ++g) {
      const double x = g / 1000.0;
      const auto p = posterior_interval(set, kernel, x);
      worst = std::min(worst, p.mean + p.deviation() - upper_bound(set, model, x));
      const auto h = posterior_interval(sparse, half, x);
      if (h.mean + h.deviation() < upper_bound(sparse, model, x) - 1e-9) hit = true;
    }
    violated_half += hit ? 1 : 0;
  }
  CheckResult r{"upper-bound guard", worst >= -1e-9 && violated_half >= 1, "", sw.seconds()};
  r.detail = "min(mu+sigma-fbar)=" + fmt(worst) + " half-scale violations=" +
             std::to_string(violated_half) + "/" + std::to_string(sets);
  return r;
}

/// Unobserved grid optimum lies in U, and every grid point of U lies in S.
inline CheckResult check_search_region(std::size_t functions = 500, std::uint64_t seed = 4) {
  using namespace verify_detail;
  Stopwatch sw;
  std::mt19937_64 rng(seed);
  std::size_t optimum_outside = 0, u_not_in_s = 0, done = 0;
  while (done < functions) {
    const double lip = uniform(rng, 0.5, 20.0);
    const LipschitzModel model{lip};
    const auto f = random_lipschitz_function(rng, lip);
    const auto set = observe(rng, f, uniform_int(rng, 1, 18));
    double best_x = 0.0, best_y = -std::numeric_limits<double>::infinity();
    for (int g = 0; g <= 1000; ++g) {
      const double x = g / 1000.0;
      if (f(x) > best_y) {
        best_y = f(x);
        best_x = x;
      }
    }
    if (!(best_y > set.incumbent().y)) continue;  // optimum already observed
    ++done;
    if (!in_upper_bound_region(set, model, best_x)) ++optimum_outside;
    const DirichletKernel kernel = kernel_scale_for(model);
    for (int g = 0; g <= 1000; ++g) {
      const double x = g / 1000.0;
      if (in_upper_bound_region(set, model, x) && !in_search_region(set, kernel, {}, x)) ++u_not_in_s;
    }
  }
  CheckResult r{"search region", optimum_outside == 0 && u_not_in_s == 0, "", sw.seconds()};
  r.detail = "optimum outside U: " + std::to_string(optimum_outside) +
             ", grid points in U but not S: " + std::to_string(u_not_in_s);
  return r;
}

/// Budget-50 BO on random piecewise-linear L-Lipschitz functions vs a 1e5-point grid.
inline CheckResult check_bo_convergence(std::size_t trials = 500, std::size_t budget = 50,
                                        std::uint64_t seed = 5) {
  using namespace verify_detail;
  Stopwatch sw;
  std::mt19937_64 rng(seed);
  std::size_t good = 0;
  double worst_gap = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const double lip = uniform(rng, 0.5, 20.0);
    const auto f = random_lipschitz_function(rng, lip, 2, 30);
    double grid_best = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < 100'000; ++g) grid_best = std::max(grid_best, f(g / 99'999.0));
    const auto result = maximize_1d(f, LipschitzModel{lip}, budget);
    const double gap = (grid_best - result.observations.incumbent().y) / lip;
    worst_gap = std::max(worst_gap, gap);
    good += gap <= 0.02 ? 1 : 0;
  }
  const double rate = static_cast<double>(good) / static_cast<double>(trials);
  CheckResult r{"1d BO convergence", rate >= 0.99, "", sw.seconds()};
  r.passed = r.passed && r.seconds < 120.0;
  r.detail = "within 0.02L: " + std::to_string(good) + "/" + std::to_string(trials) +
             " worst gap/L=" + fmt(worst_gap);
  return r;
}

/// Random small DCOPs mixing sensor instances and random multilinear tables.
inline DcopInstance random_small_instance(std::mt19937_64& rng, Aggregation op) {
  using namespace verify_detail;
  const std::size_t m = uniform_int(rng, 1, 6);
  std::vector<ContinuousDomain> domains;
  for (std::size_t v = 0; v < m; ++v) {
    const double lo = uniform(rng, -5.0, 5.0);
    domains.emplace_back(lo, lo + uniform(rng, 0.5, 10.0));
  }
  std::vector<UtilityFunction> fs;
  const std::size_t k = uniform_int(rng, 0, 2 * m);
  for (std::size_t n = 0; n < k; ++n) {
    UtilityFunction f;
    const std::size_t arity = uniform_int(rng, 1, std::min<std::size_t>(3, m));
    while (f.scope.size() < arity) {
      const VariableId v = uniform_int(rng, 0, m - 1);
      if (!f.involves(v)) f.scope.push_back(v);
    }
    // Coarse integer-valued tables make exact ties common.
    std::vector<double> table(std::size_t{1} << (2 * arity));
    for (auto& x : table) x = static_cast<double>(uniform_int(rng, 0, 4));
    std::vector<ContinuousDomain> ds;
    for (VariableId v : f.scope) ds.push_back(domains[v]);
    f.evaluator = [table, ds](std::span<const double> x) {
      // Bilinear-style blend over a 4-point lattice per axis.
      std::size_t idx = 0;
      for (std::size_t a = 0; a < ds.size(); ++a) {
        const double u = ds[a].to_unit(x[a]);
        idx = idx * 4 + std::min<std::size_t>(3, static_cast<std::size_t>(u * 4.0));
      }
      return table[idx];
    };
    fs.push_back(std::move(f));
  }
  return DcopInstance(std::move(domains), std::move(fs), op);
}

/// DPOP against full enumeration: identical utility and assignment.
inline CheckResult check_dpop_vs_exhaustive(std::size_t instances = 100, std::uint64_t seed = 7) {
  using namespace verify_detail;
  Stopwatch sw;
  std::mt19937_64 rng(seed);
  std::size_t mismatches = 0;
  std::string first;
  for (std::size_t i = 0; i < instances; ++i) {
    const bool sensor = i % 3 == 2;
    const DcopInstance inst =
        sensor ? compile(generate_problem(rng(), {uniform_int(rng, 1, 6), uniform_int(rng, 1, 12)}))
               : random_small_instance(rng, i % 3 == 0 ? Aggregation::sum : Aggregation::max);
    // Grid sizes with product <= 1e5.
    std::vector<std::size_t> ks(inst.variable_count());
    double budget_log = std::log(1e5);
    for (std::size_t v = 0; v < ks.size(); ++v) {
      const double share = budget_log / static_cast<double>(ks.size() - v);
      const auto cap = static_cast<std::size_t>(std::floor(std::exp(share) + 1e-9));
      ks[v] = uniform_int(rng, 1, std::max<std::size_t>(2, std::min<std::size_t>(cap, 40)));
      budget_log -= std::log(static_cast<double>(ks[v]));
    }
    const Grid grid = Grid::equidistant(inst, ks);
    const auto d = dpop_solve(inst, grid);
    const auto e = exhaustive_solve(inst, grid);
    if (d.utility != e.utility || d.indices != e.indices) {
      ++mismatches;
      if (first.empty()) {
        first = " first mismatch at instance " + std::to_string(i) + ": " + fmt(d.utility) + " vs " +
                fmt(e.utility);
      }
    }
  }
  CheckResult r{"dpop vs exhaustive", mismatches == 0, "", sw.seconds()};
  r.detail = std::to_string(instances - mismatches) + "/" + std::to_string(instances) + " identical" + first;
  return r;
}

/// D-Bay on 2-3 sensor instances against the k = 361 exhaustive grid; with injected grid
/// sampling D-Bay must reproduce the grid optimum.
inline CheckResult check_small_instances(std::size_t instances = 50, std::size_t budget = 25,
                                         std::size_t reference_k = 361, std::uint64_t seed = 6) {
  using namespace verify_detail;
  Stopwatch sw;
  std::mt19937_64 rng(seed);
  double worst = std::numeric_limits<double>::infinity(), sum = 0.0, worst_exact = 0.0;
  std::size_t below = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    SensorParams params;
    params.sensors = 2 + i % 2;
    params.targets = uniform_int(rng, 1, 12);
    const DcopInstance inst = compile(generate_problem(rng(), params));
    const PseudoTree tree = prepare_pseudo_tree(inst);
    const double reference = exhaustive_solve(inst, Grid::equidistant(inst, reference_k)).utility;

    RunSettings bo;
    bo.defaults.budget = budget;
    bo.keep_trace = false;
    const double rel = relative_utility(run_to_completion(inst, tree, bo).utility, reference);
    worst = std::min(worst, rel);
    below += rel < 0.95 ? 1 : 0;
    sum += rel;
    ++counted;

    RunSettings grid;
    grid.defaults.budget = budget;
    grid.defaults.sampling = GridSampling{budget};
    grid.keep_trace = false;
    const double forced = run_to_completion(inst, tree, grid).utility;
    const double exact = exhaustive_solve(inst, Grid::equidistant(inst, budget)).utility;
    worst_exact = std::max(worst_exact, std::abs(forced - exact));
  }
  // Relative utility is averaged over instances, as in the benchmark figures.
  const double mean = sum / static_cast<double>(counted);
  CheckResult r{"small-instance optimality", mean >= 0.95 && worst_exact <= 1e-9, "", sw.seconds()};
  r.detail = "mean relative=" + fmt(mean) + " min=" + fmt(worst) + " (" + std::to_string(below) +
             " below 0.95) max|forced-grid - exhaustive|=" + fmt(worst_exact);
  return r;
}

inline std::vector<CheckResult> run_all_checks() {
  return {check_posterior_oracle(),   check_expected_improvement(), check_upper_bound_guard(),
          check_search_region(),        check_bo_convergence(),       check_small_instances(),
          check_dpop_vs_exhaustive()};
}

}  // namespace dbay
