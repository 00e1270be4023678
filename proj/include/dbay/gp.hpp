#pragma once

// Gaussian-process machinery on the normalized input interval [0,1]: observation sets,
// Markovian-class kernels, closed-form interval posteriors for the Dirichlet kernel, the
// analytic tridiagonal inverse of the Gramian, and a dense posterior used as an oracle.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <string>
#include <vector>

#include "dbay/error.hpp"

namespace dbay {

struct Observation {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Observations sorted by strictly increasing x, with the incumbent (x+, y+) cached.
/// Incumbent ties resolve to the smallest x.
class ObservationSet {
 public:
  ObservationSet() = default;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Observation>& entries() const noexcept { return entries_; }
  const Observation& operator[](std::size_t i) const { return entries_[i]; }

  const Observation& incumbent() const {
    if (entries_.empty()) throw Error(Errc::insufficient_observations, "empty observation set");
    return entries_[best_];
  }
  std::size_t incumbent_index() const noexcept { return best_; }

  bool has_boundaries() const noexcept {
    return entries_.size() >= 2 && entries_.front().x == 0.0 && entries_.back().x == 1.0;
  }

  bool contains(double x) const noexcept {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), x,
                               [](const Observation& o, double v) { return o.x < v; });
    return it != entries_.end() && it->x == x;
  }

  /// Inserts in sorted position; returns the index of the new entry.
  std::size_t insert(double x, double y) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw Error(Errc::out_of_domain, "observation input must lie in [0,1]");
    }
    auto it = std::lower_bound(entries_.begin(), entries_.end(), x,
                               [](const Observation& o, double v) { return o.x < v; });
    if (it != entries_.end() && it->x == x) {
      throw Error(Errc::duplicate_input, "input " + std::to_string(x) + " already observed");
    }
    const auto idx = static_cast<std::size_t>(it - entries_.begin());
    entries_.insert(it, Observation{x, y});
    if (entries_.size() == 1) {
      best_ = 0;
    } else {
      if (idx <= best_) ++best_;
      const auto& cur = entries_[best_];
      if (y > cur.y || (y == cur.y && x < cur.x)) best_ = idx;
    }
    return idx;
  }

  friend bool operator==(const ObservationSet& a, const ObservationSet& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Observation> entries_;
  std::size_t best_ = 0;
};

/// Value-semantics insert.
inline ObservationSet insert_observation(ObservationSet set, double x, double y) {
  set.insert(x, y);
  return set;
}

/// Kernel of the Markovian class: k(a,b) = scale^2 * p(min) * g(max).
template <typename K>
concept MarkovianKernel = requires(const K& k, double x) {
  { k.scale() } -> std::convertible_to<double>;
  { k.p(x) } -> std::convertible_to<double>;
  { k.g(x) } -> std::convertible_to<double>;
};

/// Dirichlet (Brownian-bridge) kernel lambda^2 * min(a,b) * (1 - max(a,b)) on [0,1].
class DirichletKernel {
 public:
  explicit DirichletKernel(double scale) : scale_(scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      throw Error(Errc::invalid_instance, "kernel scale must be positive");
    }
  }

  double scale() const noexcept { return scale_; }
  static constexpr double p(double x) noexcept { return x; }
  static constexpr double g(double x) noexcept { return 1.0 - x; }

  double operator()(double xi, double xj) const {
    if (!(xi >= 0.0 && xi <= 1.0 && xj >= 0.0 && xj <= 1.0)) {
      throw Error(Errc::out_of_domain, "kernel inputs must lie in [0,1]");
    }
    const double lo = std::min(xi, xj);
    const double hi = std::max(xi, xj);
    return scale_ * scale_ * p(lo) * g(hi);
  }

 private:
  double scale_;
};

static_assert(MarkovianKernel<DirichletKernel>);

template <MarkovianKernel K>
double kernel_eval(const K& kernel, double xi, double xj) {
  if (!(xi >= 0.0 && xi <= 1.0 && xj >= 0.0 && xj <= 1.0)) {
    throw Error(Errc::out_of_domain, "kernel inputs must lie in [0,1]");
  }
  const double s2 = kernel.scale() * kernel.scale();
  return xi <= xj ? s2 * kernel.p(xi) * kernel.g(xj) : s2 * kernel.p(xj) * kernel.g(xi);
}

inline constexpr double kVarianceClamp = 1e-12;

struct PosteriorPoint {
  double mean = 0.0;
  double variance = 0.0;
  double deviation() const noexcept { return std::sqrt(variance); }
};

inline double clamp_variance(double v) noexcept {
  return (v < 0.0 && v >= -kVarianceClamp) ? 0.0 : v;
}

/// Closed-form Dirichlet posterior on the bracketing interval [x_{s-1}, x_s]: linear
/// interpolation of the two neighbors and a bridge variance. Requires boundary observations.
inline PosteriorPoint posterior_interval(const ObservationSet& set, const DirichletKernel& kernel,
                                         double x) {
  if (set.size() < 2 || !set.has_boundaries()) {
    throw Error(Errc::insufficient_observations,
                "interval posterior needs observations at 0 and 1");
  }
  if (!(x >= 0.0 && x <= 1.0)) throw Error(Errc::out_of_domain, "query outside [0,1]");
  const auto& e = set.entries();
  auto it = std::upper_bound(e.begin(), e.end(), x,
                             [](double v, const Observation& o) { return v < o.x; });
  if (it == e.end()) return {e.back().y, 0.0};  // x == 1
  const auto& right = *it;
  const auto& left = *(it - 1);
  if (left.x == x) return {left.y, 0.0};
  const double span = right.x - left.x;
  const double mean = (left.y * (right.x - x) + right.y * (x - left.x)) / span;
  const double lam2 = kernel.scale() * kernel.scale();
  const double variance = clamp_variance(lam2 * (right.x - x) * (x - left.x) / span);
  return {mean, variance};
}

/// Nonzero elements of the inverse Gramian of a Markovian kernel: diagonal[s] and
/// off_diagonal[s-1] = (K^-1)_{s-1,s}.
struct TridiagonalInverse {
  std::vector<double> diagonal;
  std::vector<double> off_diagonal;

  Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(diagonal.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) m(i, i) = diagonal[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < n; ++i) {
      m(i - 1, i) = m(i, i - 1) = off_diagonal[static_cast<std::size_t>(i - 1)];
    }
    return m;
  }
};

template <MarkovianKernel K>
TridiagonalInverse tridiagonal_inverse_elements(const ObservationSet& set, const K& kernel) {
  const auto& e = set.entries();
  const std::size_t n = e.size();
  if (n < 3) throw Error(Errc::insufficient_observations, "tridiagonal inverse needs S >= 3");
  // det of the 2x2 minor between consecutive inputs: p(x_b) g(x_a) - p(x_a) g(x_b).
  auto minor = [&](double a, double b) { return kernel.p(b) * kernel.g(a) - kernel.p(a) * kernel.g(b); };
  const double inv_s2 = 1.0 / (kernel.scale() * kernel.scale());
  if (kernel.p(e.front().x) == 0.0 || kernel.g(e.back().x) == 0.0) {
    throw Error(Errc::singular_gramian, "kernel vanishes at a boundary input");
  }
  std::vector<double> gaps(n - 1);
  for (std::size_t s = 1; s < n; ++s) {
    gaps[s - 1] = minor(e[s - 1].x, e[s].x);
    if (!(gaps[s - 1] > 0.0)) throw Error(Errc::singular_gramian, "coincident inputs");
  }
  TridiagonalInverse inv;
  inv.diagonal.resize(n);
  inv.off_diagonal.resize(n - 1);
  inv.diagonal[0] = inv_s2 * kernel.p(e[1].x) / (kernel.p(e[0].x) * gaps[0]);
  for (std::size_t s = 1; s + 1 < n; ++s) {
    inv.diagonal[s] = inv_s2 * minor(e[s - 1].x, e[s + 1].x) / (gaps[s - 1] * gaps[s]);
  }
  inv.diagonal[n - 1] = inv_s2 * kernel.g(e[n - 2].x) / (kernel.g(e[n - 1].x) * gaps[n - 2]);
  for (std::size_t s = 1; s < n; ++s) inv.off_diagonal[s - 1] = -inv_s2 / gaps[s - 1];
  return inv;
}

template <MarkovianKernel K>
Eigen::MatrixXd gramian(const std::vector<double>& xs, const K& kernel) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k(i, j) = kernel_eval(kernel, xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
    }
  }
  return k;
}

/// Dense GP posterior via a Cholesky solve of the Gramian. Observations at x = 0 or 1
/// (where the Dirichlet prior variance vanishes) pin the prior mean to the line through
/// them; with no boundary observations the prior mean is zero. O(S^3), oracle use only.
template <MarkovianKernel K>
PosteriorPoint posterior_dense(const ObservationSet& set, const K& kernel, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw Error(Errc::out_of_domain, "query outside [0,1]");
  double left_pin = 0.0;
  double right_pin = 0.0;
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& o : set.entries()) {
    if (kernel.p(o.x) == 0.0) {
      left_pin = o.y;
    } else if (kernel.g(o.x) == 0.0) {
      right_pin = o.y;
    } else {
      xs.push_back(o.x);
      ys.push_back(o.y);
    }
  }
  auto prior_mean = [&](double t) { return left_pin * (1.0 - t) + right_pin * t; };
  const double prior_var = kernel_eval(kernel, x, x);
  if (xs.empty()) return {prior_mean(x), prior_var};

  const auto n = static_cast<Eigen::Index>(xs.size());
  const Eigen::MatrixXd k = gramian(xs, kernel);
  Eigen::VectorXd residual(n);
  Eigen::VectorXd cross(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    residual(i) = ys[u] - prior_mean(xs[u]);
    cross(i) = kernel_eval(kernel, xs[u], x);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw Error(Errc::singular_gramian, "Gramian not positive definite");
  const Eigen::VectorXd alpha = llt.solve(residual);
  const Eigen::VectorXd beta = llt.solve(cross);
  const double mean = prior_mean(x) + cross.dot(alpha);
  const double variance = clamp_variance(prior_var - cross.dot(beta));
  return {mean, variance};
}

}  // namespace dbay
