#pragma once

// Sensor-coordination benchmark: sensors with a limited range and angle of view on a
// rectangular grid choose orientations to observe randomly placed targets.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dbay/dcop.hpp"
#include "dbay/error.hpp"

namespace dbay {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

/// Bearing from p to t in degrees, in (-180, 180].
inline double bearing_deg(Point p, Point t) noexcept {
  return std::atan2(t.y - p.y, t.x - p.x) * 180.0 / std::numbers::pi;
}

/// Minimal signed angular difference in (-180, 180].
inline double wrap_deg(double d) noexcept {
  d = std::fmod(d, 360.0);
  if (d > 180.0) d -= 360.0;
  if (d <= -180.0) d += 360.0;
  return d;
}

/// f_{n,i}: 1 when sensor i looks straight at target n, decaying linearly to 0 at +-beta;
/// 0 when the target is out of range.
inline double target_utility(double omega_deg, Point sensor, Point target, double beta_deg,
                             double range, bool wrap = true) {
  if (distance(sensor, target) > range) return 0.0;
  double diff = omega_deg - bearing_deg(sensor, target);
  if (wrap) diff = wrap_deg(diff);
  const double a = std::abs(diff);
  return a <= beta_deg ? 1.0 - a / beta_deg : 0.0;
}

struct SensorProblem {
  std::vector<Point> sensors;
  std::vector<Point> targets;
  double range = 1.0;
  double view_angle = 36.0;  // beta, degrees
  bool wrap = true;
  ContinuousDomain orientation{-180.0, 180.0};

  /// Sensors within range of target n, ascending.
  std::vector<std::size_t> observers(std::size_t n) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      if (distance(sensors[i], targets.at(n)) <= range) out.push_back(i);
    }
    return out;
  }

  /// Direct re-evaluation of G: sum over targets of the best sensor utility.
  double total_utility(std::span<const double> orientations) const {
    double g = 0.0;
    for (const auto& t : targets) {
      double best = 0.0;
      for (std::size_t i = 0; i < sensors.size(); ++i) {
        best = std::max(best, target_utility(orientations[i], sensors[i], t, view_angle, range, wrap));
      }
      g += best;
    }
    return g;
  }
};

/// Grid layout: rows = largest divisor of M not above sqrt(M), spacing range * sqrt(2)
/// (the diagonal of a grid cell equals twice the range, so no point between four
/// neighbouring sensors is left unobserved).
inline std::vector<Point> sensor_grid(std::size_t m, double range) {
  std::size_t rows = 1;
  for (std::size_t r = 1; r * r <= m; ++r) {
    if (m % r == 0) rows = r;
  }
  const std::size_t cols = m / rows;
  const double spacing = range * std::numbers::sqrt2;
  std::vector<Point> out;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out.push_back({static_cast<double>(c) * spacing, static_cast<double>(r) * spacing});
    }
  }
  return out;
}

namespace detail {
// 53-bit uniform in [0,1) from a 64-bit engine; independent of the standard library's
// distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
}  // namespace detail

inline UtilityFunction sensor_target_function(const SensorProblem& p, std::size_t n) {
  UtilityFunction f;
  const auto obs = p.observers(n);
  f.scope.assign(obs.begin(), obs.end());
  f.lipschitz.assign(obs.size(), 1.0 / p.view_angle);
  f.kind = "sensor-target";
  nlohmann::json params;
  params["target"] = {p.targets[n].x, p.targets[n].y};
  params["sensors"] = nlohmann::json::array();
  for (auto i : obs) params["sensors"].push_back({p.sensors[i].x, p.sensors[i].y});
  params["range"] = p.range;
  params["beta"] = p.view_angle;
  params["wrap"] = p.wrap;
  f.params = params.dump();
  std::vector<Point> pos;
  for (auto i : obs) pos.push_back(p.sensors[i]);
  f.evaluator = [pos, t = p.targets[n], beta = p.view_angle, l = p.range,
                 wrap = p.wrap](std::span<const double> w) {
    double best = 0.0;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      best = std::max(best, target_utility(w[k], pos[k], t, beta, l, wrap));
    }
    return best;
  };
  return f;
}

/// One function per target, scope = sensors within range, operator Sum.
inline DcopInstance compile(const SensorProblem& p) {
  std::vector<ContinuousDomain> domains(p.sensors.size(), p.orientation);
  std::vector<UtilityFunction> fs;
  for (std::size_t n = 0; n < p.targets.size(); ++n) fs.push_back(sensor_target_function(p, n));
  return DcopInstance(std::move(domains), std::move(fs), Aggregation::sum);
}

struct SensorParams {
  std::size_t sensors = 6;
  std::size_t targets = 12;
  double range = 1.0;
  double view_angle = 36.0;
  bool wrap = true;
};

/// Seeded instance: grid sensors, targets uniform over the union of observation discs.
inline SensorProblem generate_problem(std::uint64_t seed, const SensorParams& params = {}) {
  if (params.sensors == 0 || params.targets == 0) {
    throw Error(Errc::invalid_instance, "need at least one sensor and one target");
  }
  if (!(params.range > 0.0) || !(params.view_angle > 0.0)) {
    throw Error(Errc::invalid_instance, "range and view angle must be positive");
  }
  SensorProblem p;
  p.range = params.range;
  p.view_angle = params.view_angle;
  p.wrap = params.wrap;
  p.sensors = sensor_grid(params.sensors, params.range);
  double xmin = p.sensors[0].x, xmax = xmin, ymin = p.sensors[0].y, ymax = ymin;
  for (const auto& s : p.sensors) {
    xmin = std::min(xmin, s.x);
    xmax = std::max(xmax, s.x);
    ymin = std::min(ymin, s.y);
    ymax = std::max(ymax, s.y);
  }
  xmin -= p.range;
  ymin -= p.range;
  xmax += p.range;
  ymax += p.range;
  std::mt19937_64 rng(seed);
  while (p.targets.size() < params.targets) {
    const Point t{xmin + (xmax - xmin) * detail::unit_uniform(rng),
                  ymin + (ymax - ymin) * detail::unit_uniform(rng)};
    const bool covered = std::any_of(p.sensors.begin(), p.sensors.end(),
                                     [&](const Point& s) { return distance(s, t) <= p.range; });
    if (covered) p.targets.push_back(t);
  }
  return p;
}

/// Slope bound of agent i's aggregate objective in its orientation, per degree.
inline double lipschitz_bound_per_degree(const SensorProblem& p, std::size_t i) {
  std::size_t in_range = 0;
  for (const auto& t : p.targets) in_range += distance(p.sensors.at(i), t) <= p.range ? 1 : 0;
  return static_cast<double>(in_range) / p.view_angle;
}

/// Same bound on the normalized [0,1] orientation axis.
inline double lipschitz_bound(const SensorProblem& p, std::size_t i) {
  return lipschitz_bound_per_degree(p, i) * p.orientation.width();
}

inline double relative_utility(double achieved, double reference) {
  if (!(reference > 0.0)) throw Error(Errc::zero_reference, "reference optimum must be positive");
  return achieved / reference;
}

struct Efficiency {
  std::size_t budget = 0;
  std::size_t k = 0;       // grid samples per domain needed to match
  bool censored = false;   // never matched up to the largest k; k = k_max
};

inline constexpr double kEfficiencySlack = 1e-9;

/// For each D-Bay budget, the smallest grid k whose relative utility reaches D-Bay's.
inline std::vector<Efficiency> sample_efficiency(const std::map<std::size_t, double>& dbay,
                                                 const std::map<std::size_t, double>& grid_curve) {
  if (grid_curve.empty()) throw Error(Errc::invalid_instance, "empty grid curve");
  std::vector<Efficiency> out;
  for (const auto& [budget, rel] : dbay) {
    Efficiency e{budget, grid_curve.rbegin()->first, true};
    for (const auto& [k, g] : grid_curve) {
      if (g >= rel - kEfficiencySlack) {
        e.k = k;
        e.censored = false;
        break;
      }
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace dbay
