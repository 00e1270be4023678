#pragma once

// JSON problem files:
//   {"agents": [0, 1, ...], "domains": [{"lower": l, "upper": u}, ...],
//    "functions": [{"scope": [...], "kind": "...", "params": {...}, "lipschitz": [...]}],
//    "operator": "sum" | "max", "allocation": [...] (optional)}
// `kind` selects a built-in evaluator from the registry below.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dbay/dcop.hpp"
#include "dbay/error.hpp"
#include "dbay/sensor.hpp"

namespace dbay {

/// Builds evaluator (and default Lipschitz constants when the file gives none).
using FunctionFactory = std::function<void(UtilityFunction&, const nlohmann::json& params)>;

namespace detail {

inline void make_sensor_target(UtilityFunction& f, const nlohmann::json& params) {
  const auto& t = params.at("target");
  const Point target{t.at(0).get<double>(), t.at(1).get<double>()};
  std::vector<Point> pos;
  for (const auto& s : params.at("sensors")) pos.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  if (pos.size() != f.scope.size()) {
    throw Error(Errc::parse_error, "sensor-target needs one sensor position per scope variable");
  }
  const double range = params.at("range").get<double>();
  const double beta = params.at("beta").get<double>();
  const bool wrap = params.value("wrap", true);
  if (!(range > 0.0) || !(beta > 0.0)) throw Error(Errc::parse_error, "range and beta must be positive");
  if (f.lipschitz.empty()) f.lipschitz.assign(f.scope.size(), 1.0 / beta);
  f.evaluator = [pos, target, range, beta, wrap](std::span<const double> w) {
    double best = 0.0;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      best = std::max(best, target_utility(w[k], pos[k], target, beta, range, wrap));
    }
    return best;
  };
}

/// Multilinear interpolation of a table given on a rectilinear grid; values row-major with
/// the last scope variable fastest. Outside the breakpoints the table is clamped.
inline void make_piecewise_linear(UtilityFunction& f, const nlohmann::json& params) {
  auto axes = params.at("grid").get<std::vector<std::vector<double>>>();
  auto values = params.at("values").get<std::vector<double>>();
  if (axes.size() != f.scope.size()) throw Error(Errc::parse_error, "piecewise-linear needs one axis per scope variable");
  std::size_t cells = 1;
  for (const auto& ax : axes) {
    if (ax.size() < 2 || !std::is_sorted(ax.begin(), ax.end()) ||
        std::adjacent_find(ax.begin(), ax.end()) != ax.end()) {
      throw Error(Errc::parse_error, "piecewise-linear axes need >= 2 strictly increasing breakpoints");
    }
    cells *= ax.size();
  }
  if (values.size() != cells) throw Error(Errc::parse_error, "piecewise-linear value count mismatch");
  std::vector<std::size_t> strides(axes.size(), 1);
  for (std::size_t a = axes.size(); a-- > 1;) strides[a - 1] = strides[a] * axes[a].size();

  if (f.lipschitz.empty()) {
    // Largest slope along each axis over all grid edges bounds the interpolant's slope.
    f.lipschitz.assign(axes.size(), 0.0);
    for (std::size_t c = 0; c < cells; ++c) {
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const std::size_t i = (c / strides[a]) % axes[a].size();
        if (i + 1 == axes[a].size()) continue;
        const double slope = std::abs(values[c + strides[a]] - values[c]) / (axes[a][i + 1] - axes[a][i]);
        f.lipschitz[a] = std::max(f.lipschitz[a], slope);
      }
    }
  }
  f.evaluator = [axes = std::move(axes), values = std::move(values), strides](std::span<const double> x) {
    const std::size_t d = axes.size();
    std::vector<std::size_t> lo(d);
    std::vector<double> w(d);
    for (std::size_t a = 0; a < d; ++a) {
      const auto& ax = axes[a];
      const double v = std::clamp(x[a], ax.front(), ax.back());
      auto it = std::upper_bound(ax.begin(), ax.end(), v);
      std::size_t i = it == ax.begin() ? 0 : static_cast<std::size_t>(it - ax.begin()) - 1;
      i = std::min(i, ax.size() - 2);
      lo[a] = i;
      w[a] = (v - ax[i]) / (ax[i + 1] - ax[i]);
    }
    double acc = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
      double weight = 1.0;
      std::size_t off = 0;
      for (std::size_t a = 0; a < d; ++a) {
        const bool up = (corner >> a) & 1u;
        weight *= up ? w[a] : 1.0 - w[a];
        off += (lo[a] + (up ? 1 : 0)) * strides[a];
      }
      if (weight != 0.0) acc += weight * values[off];
    }
    return acc;
  };
}

}  // namespace detail

inline std::map<std::string, FunctionFactory>& function_registry() {
  static std::map<std::string, FunctionFactory> registry{
      {"sensor-target", detail::make_sensor_target},
      {"piecewise-linear", detail::make_piecewise_linear},
  };
  return registry;
}

inline DcopInstance instance_from_json(const nlohmann::json& j) {
  try {
    std::vector<ContinuousDomain> domains;
    for (const auto& d : j.at("domains")) {
      domains.emplace_back(d.at("lower").get<double>(), d.at("upper").get<double>());
    }
    if (j.contains("agents") && j.at("agents").size() != domains.size()) {
      throw Error(Errc::invalid_instance, "one variable per agent: agents and domains must match");
    }
    std::vector<UtilityFunction> fs;
    for (const auto& fj : j.at("functions")) {
      UtilityFunction f;
      f.scope = fj.at("scope").get<std::vector<VariableId>>();
      f.kind = fj.at("kind").get<std::string>();
      const nlohmann::json params = fj.value("params", nlohmann::json::object());
      f.params = params.dump();
      if (fj.contains("lipschitz")) f.lipschitz = fj.at("lipschitz").get<std::vector<double>>();
      auto it = function_registry().find(f.kind);
      if (it == function_registry().end()) throw Error(Errc::parse_error, "unknown function kind '" + f.kind + "'");
      it->second(f, params);
      fs.push_back(std::move(f));
    }
    const std::string op = j.value("operator", "sum");
    Aggregation agg;
    if (op == "sum") {
      agg = Aggregation::sum;
    } else if (op == "max") {
      agg = Aggregation::max;
    } else {
      throw Error(Errc::parse_error, "operator must be sum or max");
    }
    std::vector<AgentId> allocation;
    if (j.contains("allocation")) allocation = j.at("allocation").get<std::vector<AgentId>>();
    return DcopInstance(std::move(domains), std::move(fs), agg, std::move(allocation));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, e.what());
  }
}

inline nlohmann::json instance_to_json(const DcopInstance& instance) {
  nlohmann::json j;
  j["agents"] = nlohmann::json::array();
  for (AgentId a = 0; a < instance.agent_count(); ++a) j["agents"].push_back(a);
  j["domains"] = nlohmann::json::array();
  for (const auto& d : instance.domains()) j["domains"].push_back({{"lower", d.lower}, {"upper", d.upper}});
  j["functions"] = nlohmann::json::array();
  for (const auto& f : instance.functions()) {
    if (!function_registry().contains(f.kind)) {
      throw Error(Errc::parse_error, "function " + std::to_string(f.id) + " has no serializable kind");
    }
    j["functions"].push_back({{"scope", f.scope},
                              {"kind", f.kind},
                              {"params", nlohmann::json::parse(f.params.empty() ? "{}" : f.params)},
                              {"lipschitz", f.lipschitz}});
  }
  j["operator"] = instance.op() == Aggregation::sum ? "sum" : "max";
  j["allocation"] = instance.allocation();
  return j;
}

inline DcopInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::parse_error, "cannot open problem file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, path + ": " + e.what());
  }
  return instance_from_json(j);
}

}  // namespace dbay
