#pragma once

#include <cstddef>
#include <vector>

#include "mphjb/hjb_problem.hpp"

namespace mphjb {

/// s -> 1/2 a s^2 + b s + c
struct ScalarQuadratic {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double operator()(double s) const { return 0.5 * a * s * s + b * s + c; }
};

/// Capped call spread (s - K1)^+ - (s - K2)^+.
double call_spread(double s, double K1, double K2);

struct ScalarPayoffOptions {
  double K1 = -5.0;
  double K2 = 5.0;
  double range = 1000.0;   // R: the approximation holds on [-R, R]
  double epsilon = 0.05;   // sup-gap tolerance
  std::size_t max_forms = 10000;
};

struct ScalarPayoffApproximation {
  std::vector<ScalarQuadratic> forms;  // forms[0] is the zero form
  double achieved_gap = 0.0;           // max of call_spread - envelope on the check grid
  double max_overshoot = 0.0;          // max of envelope - call_spread on the check grid
};

/// Lower approximation of the call spread by a finite sup of concave
/// parabolas: the zero form, parabolas tangent to the rising piece on
/// [K1, K2), and parabolas tangent to the plateau on (K2, R]. Each curvature
/// is the smallest one keeping the parabola below the payoff on [-R, R];
/// tangent points are placed greedily so the envelope stays within epsilon.
/// The result is verified on a grid of step epsilon/10. Throws
/// NumericalError (with the achieved gap) if epsilon cannot be met within
/// max_forms.
ScalarPayoffApproximation approximate_scalar_payoff(const ScalarPayoffOptions& options);

/// psi(x) = call_spread(max_{i in I} x_i - min_{j in J} x_j). Indices are 0-based.
double max_min_spread_payoff(const Vec& x, const std::vector<int>& I, const std::vector<int>& J,
                             double K1, double K2);

/// Substitutes s = x_i - x_j for every (form, i in I, j in J), in that loop
/// order. Indices are 0-based, must be in range and I, J disjoint.
std::vector<QuadraticForm> lift_payoff(const std::vector<ScalarQuadratic>& forms,
                                       const std::vector<int>& I, const std::vector<int>& J,
                                       int dimension);

}  // namespace mphjb
