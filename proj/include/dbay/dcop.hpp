#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dbay/error.hpp"

namespace dbay {

using AgentId = std::size_t;
using VariableId = std::size_t;

/// Closed interval [lower, upper] of admissible values for one variable.
struct ContinuousDomain {
  double lower = 0.0;
  double upper = 1.0;

  ContinuousDomain() = default;
  ContinuousDomain(double lo, double hi) : lower(lo), upper(hi) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw Error(Errc::invalid_instance, "domain requires finite lower < upper");
    }
  }

  double width() const noexcept { return upper - lower; }
  bool contains(double v) const noexcept { return v >= lower && v <= upper; }

  /// Maps a normalized coordinate in [0,1] into the domain. The endpoints map exactly.
  double from_unit(double u) const noexcept {
    if (u <= 0.0) return lower;
    if (u >= 1.0) return upper;
    return std::clamp(lower + u * width(), lower, upper);
  }

  double to_unit(double v) const noexcept {
    if (v <= lower) return 0.0;
    if (v >= upper) return 1.0;
    return std::clamp((v - lower) / width(), 0.0, 1.0);
  }
};

/// Normalized position of grid point j out of k equidistant points (both endpoints
/// included; a single point sits at the midpoint).
inline double grid_unit(std::size_t j, std::size_t k) noexcept {
  return k <= 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(k - 1);
}

enum class Aggregation { sum, max };

inline double identity(Aggregation op) noexcept {
  return op == Aggregation::sum ? 0.0 : -std::numeric_limits<double>::infinity();
}

inline double combine(Aggregation op, double a, double b) noexcept {
  return op == Aggregation::sum ? a + b : std::max(a, b);
}

/// A utility function over an ordered scope of variables. The evaluator receives the
/// scope values in scope order. `lipschitz[k]` bounds the slope with respect to scope[k]
/// in utility units per domain unit.
struct UtilityFunction {
  using Evaluator = std::function<double(std::span<const double>)>;

  std::size_t id = 0;
  std::vector<VariableId> scope;
  Evaluator evaluator;
  std::vector<double> lipschitz;
  // Opaque provenance used by the problem-file writer.
  std::string kind;
  std::string params;

  double operator()(std::span<const double> scope_values) const { return evaluator(scope_values); }

  double lipschitz_for(VariableId v) const noexcept {
    for (std::size_t k = 0; k < scope.size(); ++k) {
      if (scope[k] == v) return lipschitz[k];
    }
    return 0.0;
  }

  bool involves(VariableId v) const noexcept {
    return std::find(scope.begin(), scope.end(), v) != scope.end();
  }
};

/// Partial or complete assignment of values to variables.
class Assignment {
 public:
  Assignment() = default;
  explicit Assignment(std::size_t variables) : values_(variables) {}

  std::size_t size() const noexcept { return values_.size(); }

  void set(VariableId v, double value) {
    if (v >= values_.size()) values_.resize(v + 1);
    values_[v] = value;
  }
  bool has(VariableId v) const noexcept { return v < values_.size() && values_[v].has_value(); }
  double at(VariableId v) const {
    if (!has(v)) {
      throw Error(Errc::incomplete_assignment, "variable " + std::to_string(v) + " unassigned");
    }
    return *values_[v];
  }

  bool is_complete() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](const auto& o) { return o.has_value(); });
  }

  friend bool operator==(const Assignment&, const Assignment&) = default;

 private:
  std::vector<std::optional<double>> values_;
};

/// Continuous DCOP <A, X, D, F, alpha, op> with exactly one variable per agent.
class DcopInstance {
 public:
  DcopInstance(std::vector<ContinuousDomain> domains, std::vector<UtilityFunction> functions,
               Aggregation op, std::vector<AgentId> allocation = {})
      : domains_(std::move(domains)), functions_(std::move(functions)), op_(op) {
    const std::size_t n = domains_.size();
    if (n == 0) throw Error(Errc::invalid_instance, "instance needs at least one variable");
    if (allocation.empty()) {
      allocation.resize(n);
      for (std::size_t v = 0; v < n; ++v) allocation[v] = v;
    }
    if (allocation.size() != n) {
      throw Error(Errc::invalid_instance, "allocation must map every variable to one agent");
    }
    variable_of_.assign(n, n);
    for (std::size_t v = 0; v < n; ++v) {
      const AgentId a = allocation[v];
      if (a >= n || variable_of_[a] != n) {
        throw Error(Errc::invalid_instance,
                    "allocation must be a bijection (one variable per agent)");
      }
      variable_of_[a] = v;
    }
    agent_of_ = std::move(allocation);

    for (std::size_t k = 0; k < functions_.size(); ++k) {
      auto& f = functions_[k];
      f.id = k;
      if (f.scope.empty()) throw Error(Errc::invalid_instance, "function scope must be nonempty");
      auto sorted = f.scope;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(Errc::invalid_instance, "function scope has duplicates");
      }
      if (sorted.back() >= n) throw Error(Errc::invalid_instance, "scope variable out of range");
      if (f.lipschitz.empty()) f.lipschitz.assign(f.scope.size(), 0.0);
      if (f.lipschitz.size() != f.scope.size() ||
          std::any_of(f.lipschitz.begin(), f.lipschitz.end(),
                      [](double l) { return !(l >= 0.0) || !std::isfinite(l); })) {
        throw Error(Errc::invalid_instance, "lipschitz needs one finite value >= 0 per scope entry");
      }
      if (!f.evaluator) throw Error(Errc::invalid_instance, "function has no evaluator");
    }
  }

  std::size_t agent_count() const noexcept { return domains_.size(); }
  std::size_t variable_count() const noexcept { return domains_.size(); }
  const std::vector<ContinuousDomain>& domains() const noexcept { return domains_; }
  const ContinuousDomain& domain(VariableId v) const { return domains_.at(v); }
  const std::vector<UtilityFunction>& functions() const noexcept { return functions_; }
  const UtilityFunction& function(std::size_t k) const { return functions_.at(k); }
  Aggregation op() const noexcept { return op_; }
  AgentId agent_of(VariableId v) const { return agent_of_.at(v); }
  VariableId variable_of(AgentId a) const { return variable_of_.at(a); }
  const std::vector<AgentId>& allocation() const noexcept { return agent_of_; }

 private:
  std::vector<ContinuousDomain> domains_;
  std::vector<UtilityFunction> functions_;
  Aggregation op_;
  std::vector<AgentId> agent_of_;
  std::vector<VariableId> variable_of_;
};

/// Evaluates one function on a complete-enough assignment.
inline double evaluate_function(const UtilityFunction& f, const Assignment& assignment) {
  double buf[8];
  std::vector<double> heap;
  double* values = buf;
  if (f.scope.size() > 8) {
    heap.resize(f.scope.size());
    values = heap.data();
  }
  for (std::size_t k = 0; k < f.scope.size(); ++k) values[k] = assignment.at(f.scope[k]);
  return f(std::span<const double>(values, f.scope.size()));
}

/// G(sigma): the aggregate of all utility functions on a complete assignment.
inline double evaluate_objective(const DcopInstance& instance, const Assignment& assignment) {
  if (assignment.size() < instance.variable_count()) {
    throw Error(Errc::incomplete_assignment, "assignment does not cover every variable");
  }
  for (VariableId v = 0; v < instance.variable_count(); ++v) {
    const double value = assignment.at(v);
    if (!instance.domain(v).contains(value)) {
      throw Error(Errc::out_of_domain, "value of variable " + std::to_string(v) + " outside domain");
    }
  }
  double total = identity(instance.op());
  for (const auto& f : instance.functions()) {
    total = combine(instance.op(), total, evaluate_function(f, assignment));
  }
  return total;
}

}  // namespace dbay
