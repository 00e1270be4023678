#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <utility>

#include "dbay/error.hpp"
#include "dbay/gp.hpp"

namespace dbay {

inline double normal_pdf(double z) noexcept {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct AcquisitionParams {
  double xi = 0.0;  // exploration offset, utility units
};

/// Lipschitz constant in utility units per unit of normalized input.
struct LipschitzModel {
  double constant = 0.0;
};

/// Closed-form expected improvement over the incumbent; exactly 0 where sigma = 0.
inline double expected_improvement(const PosteriorPoint& post, double incumbent_y,
                                   const AcquisitionParams& params = {}) {
  const double sigma = post.deviation();
  if (!(sigma > 0.0)) return 0.0;
  const double w = post.mean - incumbent_y - params.xi;
  const double z = w / sigma;
  return std::max(0.0, w * normal_cdf(z) + sigma * normal_pdf(z));
}

/// Lipschitz upper envelope min_s (y_s + L |x - x_s|).
inline double upper_bound(const ObservationSet& set, const LipschitzModel& lip, double x) {
  if (set.empty()) throw Error(Errc::insufficient_observations, "upper bound needs S >= 1");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : set.entries()) best = std::min(best, o.y + lip.constant * std::abs(x - o.x));
  return best;
}

inline bool in_upper_bound_region(const ObservationSet& set, const LipschitzModel& lip, double x) {
  return upper_bound(set, lip, x) > set.incumbent().y;
}

inline bool in_search_region(const ObservationSet& set, const DirichletKernel& kernel,
                             const AcquisitionParams& params, double x) {
  return expected_improvement(posterior_interval(set, kernel, x), set.incumbent().y, params) > 0.0;
}

/// Smallest kernel scale for which mu + sigma dominates the Lipschitz envelope: lambda = L.
inline DirichletKernel kernel_scale_for(const LipschitzModel& lip) {
  if (!(lip.constant > 0.0)) {
    throw Error(Errc::zero_lipschitz, "zero Lipschitz constant: objective is constant");
  }
  return DirichletKernel(lip.constant);
}

struct IntervalGeometry {
  double delta = 0.0;           // x_s - x_{s-1}
  double normalized_x = 0.0;    // query position inside the interval, in [0,1]
  double slope_ratio = 0.0;     // (y_s - y_{s-1}) / (L * delta), in [-1,1]
  double critical_point = 0.0;  // apex of the envelope, (1 + slope_ratio) / 2
};

/// Apex of the Lipschitz envelope between two neighboring observations, in interval
/// coordinates. `query` is mapped into normalized_x.
inline IntervalGeometry critical_point(const Observation& left, const Observation& right,
                                       const LipschitzModel& lip, double query = 0.0) {
  if (!(left.x < right.x)) throw Error(Errc::invalid_instance, "interval needs x_{s-1} < x_s");
  if (!(lip.constant > 0.0)) throw Error(Errc::zero_lipschitz, "critical point needs L > 0");
  IntervalGeometry geo;
  geo.delta = right.x - left.x;
  const double bound = lip.constant * geo.delta;
  const double rise = right.y - left.y;
  if (std::abs(rise) > bound * (1.0 + 1e-9) + 1e-12) {
    throw Error(Errc::lipschitz_violated,
                "observations rise faster than the declared Lipschitz constant");
  }
  geo.slope_ratio = std::clamp(rise / bound, -1.0, 1.0);
  geo.critical_point = 0.5 * (1.0 + geo.slope_ratio);
  geo.normalized_x = std::clamp((query - left.x) / geo.delta, 0.0, 1.0);
  return geo;
}

inline constexpr double kGoldenTolerance = 1e-6;
inline constexpr double kFlatExpectedImprovement = 1e-15;

namespace detail {

inline double interval_ei(const Observation& left, const Observation& right, double lam2,
                          double incumbent, const AcquisitionParams& params, double x) {
  const double span = right.x - left.x;
  const double mean = (left.y * (right.x - x) + right.y * (x - left.x)) / span;
  const double var = clamp_variance(lam2 * (right.x - x) * (x - left.x) / span);
  return expected_improvement({mean, var}, incumbent, params);
}

struct IntervalBest {
  double x = 0.0;
  double ei = 0.0;
};

// Golden-section maximization inside (left.x, right.x), seeded with the midpoint.
inline IntervalBest maximize_on_interval(const Observation& left, const Observation& right,
                                         double lam2, double incumbent,
                                         const AcquisitionParams& params) {
  constexpr double inv_phi = 0.6180339887498948482;
  auto f = [&](double x) { return interval_ei(left, right, lam2, incumbent, params, x); };
  double a = left.x;
  double b = right.x;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > kGoldenTolerance) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double mid = 0.5 * (left.x + right.x);
  IntervalBest best{mid, f(mid)};
  const double golden = 0.5 * (a + b);
  if (golden > left.x && golden < right.x) {
    const double fg = f(golden);
    if (fg > best.ei || (fg == best.ei && golden < best.x)) best = {golden, fg};
  }
  return best;
}

}  // namespace detail

/// Memo of per-interval maximizers. Entries are reused only when the interval's endpoints,
/// the incumbent and the acquisition parameters are unchanged.
class AcquisitionCache {
 public:
  struct Entry {
    Observation left, right;
    double incumbent, lam2, xi;
    detail::IntervalBest best;
  };

  const detail::IntervalBest* find(const Observation& l, const Observation& r, double incumbent,
                                   double lam2, double xi) const {
    auto it = entries_.find({l.x, r.x});
    if (it == entries_.end()) return nullptr;
    const auto& e = it->second;
    if (e.left == l && e.right == r && e.incumbent == incumbent && e.lam2 == lam2 && e.xi == xi) {
      return &e.best;
    }
    return nullptr;
  }

  void store(const Observation& l, const Observation& r, double incumbent, double lam2, double xi,
             detail::IntervalBest best) {
    entries_[{l.x, r.x}] = Entry{l, r, incumbent, lam2, xi, best};
  }

  void clear() { entries_.clear(); }

 private:
  std::map<std::pair<double, double>, Entry> entries_;
};

/// argmax of expected improvement over [0,1]. Each inter-observation interval is searched
/// by golden section; the globally best interval wins, ties toward smaller x.
inline double select_next_sample(const ObservationSet& set, const DirichletKernel& kernel,
                                 const AcquisitionParams& params = {},
                                 AcquisitionCache* cache = nullptr) {
  if (set.size() < 2 || !set.has_boundaries()) {
    throw Error(Errc::insufficient_observations, "sample selection needs boundary observations");
  }
  const auto& e = set.entries();
  const double lam2 = kernel.scale() * kernel.scale();
  const double incumbent = set.incumbent().y;
  detail::IntervalBest winner{0.0, -1.0};
  for (std::size_t s = 1; s < e.size(); ++s) {
    detail::IntervalBest best;
    if (const auto* hit = cache ? cache->find(e[s - 1], e[s], incumbent, lam2, params.xi) : nullptr) {
      best = *hit;
    } else {
      best = detail::maximize_on_interval(e[s - 1], e[s], lam2, incumbent, params);
      if (cache) cache->store(e[s - 1], e[s], incumbent, lam2, params.xi, best);
    }
    if (best.ei > winner.ei) winner = best;
  }
  if (!(winner.ei > kFlatExpectedImprovement)) {
    throw Error(Errc::converged_flat, "expected improvement vanished on [0,1]");
  }
  return winner.x;
}

}  // namespace dbay
