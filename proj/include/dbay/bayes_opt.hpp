#pragma once

#include <array>
#include <cstddef>
#include <utility>

#include "dbay/acquisition.hpp"
#include "dbay/gp.hpp"

namespace dbay {

/// Normalized bootstrap inputs taken before the acquisition function drives sampling:
/// both domain endpoints, then the midpoint.
inline constexpr std::array<double, 3> kBootstrapInputs{0.0, 1.0, 0.5};

struct BayesOptResult {
  ObservationSet observations;
  bool converged_early = false;
};

/// Sequential maximization of a scalar function on [0,1] with the Dirichlet kernel at
/// lambda = L and expected improvement. Stops after `budget` evaluations or when the
/// search region is empty.
template <typename Objective>
BayesOptResult maximize_1d(Objective&& objective, LipschitzModel lip, std::size_t budget,
                           AcquisitionParams params = {}) {
  BayesOptResult out;
  const DirichletKernel kernel = kernel_scale_for(lip);
  AcquisitionCache cache;
  while (out.observations.size() < budget) {
    double x;
    const std::size_t n = out.observations.size();
    if (n < kBootstrapInputs.size()) {
      x = kBootstrapInputs[n];
    } else {
      try {
        x = select_next_sample(out.observations, kernel, params, &cache);
      } catch (const Error& e) {
        if (e.code() != Errc::converged_flat) throw;
        out.converged_early = true;
        break;
      }
      if (out.observations.contains(x)) {
        out.converged_early = true;
        break;
      }
    }
    out.observations.insert(x, objective(x));
  }
  return out;
}

}  // namespace dbay
