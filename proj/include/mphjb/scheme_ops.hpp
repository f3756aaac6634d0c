#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "mphjb/factorization.hpp"
#include "mphjb/monotone_poly.hpp"

namespace mphjb {

/// A law for the increment W_{t+h} - W_t: N points with probabilities.
/// Monte Carlo samples carry uniform weights; quadrature and discrete laws
/// carry their own.
struct IncrementSample {
  Mat increments;  // d x N
  Vec weights;     // N, sums to 1
  double h = 0.0;
  bool monte_carlo = true;
  /// E[N^{4k+2}] under the normalised law, when it is not the Gaussian one.
  std::function<double(int k)> normalizing_moment;

  static IncrementSample from_monte_carlo(Mat increments, double h);
  static IncrementSample from_weighted(Mat increments, Vec weights, double h);

  std::size_t size() const { return static_cast<std::size_t>(increments.cols()); }
  int dimension() const { return static_cast<int>(increments.rows()); }

  /// Weight polynomial for this law (Gaussian constants unless overridden).
  MonotonePolynomial polynomial(const Mat& sigma, int k) const;
};

/// Tensor Gauss-Hermite law for sqrt(h) N in R^d, `nodes` points per axis.
IncrementSample gaussian_quadrature_increments(int dimension, int nodes, double h);

/// Tensor product of the three-point law {-nu, 0, nu} with probabilities
/// {1/(2nu^2), 1 - 1/nu^2, 1/(2nu^2)}, scaled by sqrt(h).
IncrementSample three_point_increments(int dimension, double nu, double h);

struct DerivativeEstimates {
  double D0 = 0.0;
  Vec D1;
  std::vector<std::size_t> modes;  // mode index of each D2 entry
  std::vector<double> D2;
  std::size_t samples = 0;
  double se_D0 = 0.0;
  Vec se_D1;
  std::vector<double> se_D2;

  double D2_for(std::size_t mode) const;
};

/// Weighted means over the increment law:
///   D0 = E phi, D1 = (sbar')^{-1} E[phi dW] / h, D2_m = E[phi P_m(dW/sqrt h)] / h.
/// `phi` and every entry of `P_values` hold one value per increment.
/// Standard errors are sample standard errors for Monte Carlo laws, 0 otherwise.
DerivativeEstimates estimate_derivatives(const Vec& phi, const IncrementSample& increments,
                                         const Mat& sigma_bar, const std::vector<std::size_t>& modes,
                                         const std::vector<Vec>& P_values);

/// Same, evaluating phi~ and the polynomials.
DerivativeEstimates estimate_derivatives(const std::function<double(const Vec& dW)>& phi,
                                         const IncrementSample& increments, const Mat& sigma_bar,
                                         const std::vector<std::size_t>& modes,
                                         const std::vector<MonotonePolynomial>& polys);

/// P_m(dW_j / sqrt h) for every increment.
Vec polynomial_values(const MonotonePolynomial& p, const IncrementSample& increments);

/// constant + linear . u + 1/2 u' hessian u
struct LqCoefficients {
  double constant = 0.0;
  Vec linear;
  Mat hessian;
};

struct LqResult {
  Vec u;
  double value;
};

/// Unconstrained maximiser of a strictly concave quadratic; an empty control
/// space returns the constant. Throws NumericalError when the Hessian is not
/// negative definite.
LqResult lq_maximize(const LqCoefficients& g);

struct ModeUpdate {
  double value;  // D0 + h max_u (G1 + D2)
  Vec u;         // maximiser (empty without continuum control)
};

/// G^m_{t,h,x} applied through precomputed estimates.
ModeUpdate apply_G_detail(const ProblemSpec& spec, const GeneratorChoice& gen, std::size_t m,
                          const Vec& x, const DerivativeEstimates& est, double h);
double apply_G(const ProblemSpec& spec, const GeneratorChoice& gen, std::size_t m, const Vec& x,
               const DerivativeEstimates& est, double h);

/// Everything the one-step operator needs besides phi and x.
struct SchemeContext {
  const ProblemSpec& spec;
  const GeneratorChoice& generator;
  int k;
  const IncrementSample& increments;
};

/// T_{t,h}(phi)(x) = max_m G^m(phi(S^m(x, .))).
double apply_T(const SchemeContext& ctx, const std::function<double(const Vec&)>& phi,
               const Vec& x);

struct Stencil1d {
  double center;
  double plus;
  double minus;
  double b;
  bool consistent;          // b == A11
  bool monotone;            // all weights >= 0
  bool strictly_monotone;   // center weight > 0
};

/// phi(x) + b/(2nu^2) (phi(x+dx) + phi(x-dx) - 2phi(x)) with dx = sqrt(h) nu and
/// b = 1 + (A11 - 1)(nu^2 - 1)/(4k + 2).
Stencil1d discrete_increment_operator_1d(double A11, int k, double nu);

/// 9-point weights indexed [e1 + 1][e2 + 1] for the points x + sqrt(3h)(e1, e2).
struct Stencil2d {
  std::array<std::array<double, 3>, 3> weight;
  double b;  // (1 + tr(A - I)) / 3
  double sum() const;
  bool monotone() const;
};

Stencil2d discrete_increment_weights_2d(const Mat& A);

}  // namespace mphjb
