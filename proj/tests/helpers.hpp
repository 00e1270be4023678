#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dbay/dbay.hpp"

namespace testing_helpers {

using dbay::UtilityFunction;

inline UtilityFunction make_fn(std::vector<dbay::VariableId> scope,
                               std::function<double(std::span<const double>)> fn,
                               std::vector<double> lipschitz = {}) {
  UtilityFunction f;
  f.scope = std::move(scope);
  f.evaluator = std::move(fn);
  f.lipschitz = std::move(lipschitz);
  return f;
}

inline UtilityFunction constant_fn(std::vector<dbay::VariableId> scope, double v) {
  return make_fn(std::move(scope), [v](std::span<const double>) { return v; });
}

/// Unit domains [0,1] for n variables.
inline std::vector<dbay::ContinuousDomain> unit_domains(std::size_t n) {
  return std::vector<dbay::ContinuousDomain>(n, dbay::ContinuousDomain{0.0, 1.0});
}

/// Instance whose constraint graph has exactly the given edges (one binary function per edge).
inline dbay::DcopInstance graph_instance(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<UtilityFunction> fs;
  for (auto [a, b] : edges) fs.push_back(constant_fn({a, b}, 1.0));
  return dbay::DcopInstance(unit_domains(n), std::move(fs), dbay::Aggregation::sum);
}

/// Random connected graph: random spanning tree plus extra edges.
inline std::vector<std::pair<std::size_t, std::size_t>> random_connected_edges(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(order[i], order[rng() % i]);
  const std::size_t extra = n > 1 ? rng() % (n * (n - 1) / 2) : 0;
  for (std::size_t e = 0; e < extra; ++e) {
    const std::size_t a = rng() % n, b = rng() % n;
    if (a != b) edges.emplace_back(a, b);
  }
  return edges;
}

}  // namespace testing_helpers
