// Solve one generated sensor instance with D-Bay and compare with the grid baseline.
#include <iostream>

#include "dbay/dbay.hpp"

int main() {
  const auto problem = dbay::generate_problem(7);
  const auto instance = dbay::compile(problem);
  const auto tree = dbay::prepare_pseudo_tree(instance);

  dbay::RunSettings settings;
  settings.defaults.budget = 15;
  const auto run = dbay::run_to_completion(instance, tree, settings);

  const double reference = dbay::dpop_solve(instance, dbay::Grid::equidistant(instance, 720)).utility;
  const double grid = dbay::dpop_solve(instance, dbay::Grid::equidistant(instance, 15)).utility;

  std::cout << "D-Bay utility " << run.utility << " (relative " << run.utility / reference << ")\n";
  std::cout << "grid k=15     " << grid << " (relative " << grid / reference << ")\n";
  std::cout << "messages " << run.metrics.total_messages() << ", samples " << run.metrics.total_samples() << '\n';
  for (std::size_t i = 0; i < instance.agent_count(); ++i) {
    std::cout << "sensor " << i << " orientation " << run.assignment.at(i) << " deg\n";
  }
}
