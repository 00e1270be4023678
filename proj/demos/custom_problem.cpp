// A hand-written continuous DCOP: three agents on a chain with quadratic-ish utilities.
#include <iostream>

#include "dbay/dbay.hpp"

int main() {
  using dbay::UtilityFunction;
  std::vector<dbay::ContinuousDomain> domains(3, dbay::ContinuousDomain{-1.0, 1.0});
  std::vector<UtilityFunction> fs;
  // f(x0, x1) = -|x0 - x1| + x0,   f(x1, x2) = -|x1 + x2|,   f(x2) = x2 / 2
  fs.push_back({0, {0, 1}, [](std::span<const double> v) { return -std::abs(v[0] - v[1]) + v[0]; }, {2.0, 1.0}});
  fs.push_back({0, {1, 2}, [](std::span<const double> v) { return -std::abs(v[0] + v[1]); }, {1.0, 1.0}});
  fs.push_back({0, {2}, [](std::span<const double> v) { return 0.5 * v[0]; }, {0.5}});
  const dbay::DcopInstance instance(domains, fs, dbay::Aggregation::sum);
  const auto tree = dbay::prepare_pseudo_tree(instance);

  dbay::RunSettings settings;
  settings.defaults.budget = 12;
  const auto run = dbay::run_to_completion(instance, tree, settings);
  std::cout << "utility " << run.utility << " at (" << run.assignment.at(0) << ", " << run.assignment.at(1)
            << ", " << run.assignment.at(2) << ")\n";
  const auto exact = dbay::exhaustive_solve(instance, dbay::Grid::equidistant(instance, 101));
  std::cout << "grid optimum (k=101) " << exact.utility << '\n';
}
