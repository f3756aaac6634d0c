#include "mphjb/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "mphjb/types.hpp"

namespace mphjb {

GaussRule gauss_hermite_normal(int n) {
  if (n < 1) throw UsageError("gauss_hermite_normal: need at least one node");
  // The unscaled recurrence overflows near the outer nodes beyond this.
  if (n > 512) throw UsageError("gauss_hermite_normal: at most 512 nodes");
  // Physicists' nodes x (weight exp(-x^2)); the normal rule uses sqrt(2) x.
  constexpr double kPim4 = 0.7511255444649425;  // pi^{-1/4}
  constexpr int kMaxIter = 200;
  const double nd = n;
  std::vector<double> x(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(n));
  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * nd + 1.0) - 1.85575 * std::pow(2.0 * nd + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(nd, 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[static_cast<std::size_t>(i - 2)];
    }
    double pp = 0.0;
    int it = 0;
    for (; it < kMaxIter; ++it) {
      double p1 = kPim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(j / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * nd) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-14 * std::max(1.0, std::abs(z))) break;
    }
    if (it == kMaxIter) throw NumericalError("gauss_hermite_normal: Newton did not converge");
    x[static_cast<std::size_t>(i)] = z;
    x[static_cast<std::size_t>(n - 1 - i)] = -z;
    w[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
    w[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
  }
  if (n % 2 == 1) x[static_cast<std::size_t>(n / 2)] = 0.0;

  GaussRule rule;
  rule.nodes.resize(x.size());
  rule.weights.resize(w.size());
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  // Ascending order.
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t src = x.size() - 1 - i;
    rule.nodes[i] = std::numbers::sqrt2 * x[src];
    rule.weights[i] = w[src] * inv_sqrt_pi;
  }
  return rule;
}

}  // namespace mphjb
