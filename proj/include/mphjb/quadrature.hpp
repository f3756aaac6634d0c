#pragma once

#include <vector>

namespace mphjb {

/// Gauss-Hermite rule for the standard normal law: sum_i w_i f(z_i) ~ E[f(N)],
/// exact for polynomials of degree <= 2n - 1. Weights sum to 1.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point rule by Newton iteration on the normalised Hermite recurrence,
/// 1 <= n <= 512.
GaussRule gauss_hermite_normal(int n);

}  // namespace mphjb
