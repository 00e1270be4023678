// Maximize a 1-D Lipschitz function with the Dirichlet-kernel BO loop.
#include <cmath>
#include <iostream>

#include "dbay/dbay.hpp"

int main() {
  // |slope| <= 2*pi*0.5 + 1 < 5
  auto f = [](double x) { return 0.5 * std::sin(2.0 * 3.14159265358979 * x) + x; };
  const auto result = dbay::maximize_1d(f, dbay::LipschitzModel{5.0}, 20);
  for (const auto& o : result.observations.entries()) std::cout << o.x << ' ' << o.y << '\n';
  const auto best = result.observations.incumbent();
  std::cout << "best x=" << best.x << " y=" << best.y << '\n';
}
