#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "mphjb/hjb_problem.hpp"

namespace mphjb {

/// Linear generator L = 1/2 tr(sbar sbar' D2) + fbar . D shared by a class of modes.
struct Generator {
  std::function<Vec(const Vec& x)> drift;        // fbar; empty means zero
  std::function<Mat(const Vec& x)> volatility;   // sbar, invertible
};

/// Sigma with Sigma Sigma' = sbar^{-1}(sigma sigma' - sbar sbar')sbar^{-T}, zero
/// columns removed (ell may be 0).
struct ResidualFactor {
  Mat sigma;           // d x ell, lower trapezoidal
  double abar = 0.0;   // tr(Sigma Sigma')
};

/// Retained generators (one per class of modes sharing a linear part) and the
/// projection of every mode onto its class.
struct GeneratorChoice {
  std::vector<Generator> retained;
  std::vector<std::size_t> representative;  // class r -> its representative mode
  std::vector<std::size_t> projection;      // mode m -> class r
  /// Filled when sbar^{-1} sigma^m is constant in x: the residual factor of
  /// every mode, computed once up front and shared read-only.
  std::optional<std::vector<ResidualFactor>> constant_factors;

  std::size_t class_count() const { return retained.size(); }
  std::size_t class_of(std::size_t mode) const { return projection.at(mode); }
  std::vector<std::size_t> modes_in_class(std::size_t r) const;

  Vec drift(std::size_t r, const Vec& x) const;
  Mat volatility(std::size_t r, const Vec& x) const;

  /// Throws ConfigurationError unless projection/representative are
  /// consistent (pi(mbar) = mbar) for a problem with `mode_count` modes.
  void validate(std::size_t mode_count) const;
};

/// One generator shared by every mode (single class, representative mode 0).
GeneratorChoice single_class_generator(Generator g, std::size_t mode_count);

/// Condition number above which a generator volatility counts as singular.
inline constexpr double kMaxGeneratorCondition = 1e12;

/// sbar^{-1} (sigma^m sigma^m' - sbar sbar') sbar^{-T} at (x, u), symmetrised.
/// Throws NumericalError when sbar is singular or the result has an
/// eigenvalue below -1e-8 (1 + |result|) ("domination violated").
Mat residual_matrix(const ProblemSpec& spec, const GeneratorChoice& gen, std::size_t m,
                    const Vec& x, const Vec& u);

/// Cholesky factor of a PSD matrix with near-zero pivots (below
/// rel_tol tr(S)/d) dropped. Returns d x ell with ell the numerical rank.
Mat cholesky_drop_zero_columns(const Mat& S, double rel_tol = 1e-10);

/// Residual factor of mode m at (x, u): the cached constant when available,
/// otherwise residual_matrix followed by cholesky_drop_zero_columns.
ResidualFactor residual_factor(const ProblemSpec& spec, const GeneratorChoice& gen,
                               std::size_t m, const Vec& x, const Vec& u);

/// Checks unit diagonal, symmetry and positive semidefiniteness.
void validate_correlation(const Mat& corr);

/// Generator for dxi_i = s_i xi_i dB_i with correlation in a finite set:
/// sbar(x) = sqrt(lambda) diag(s_i x_i), fbar = 0, lambda the smallest
/// eigenvalue over the set, one class for all modes, and constant residual
/// factors chol((m - lambda I) / lambda).
GeneratorChoice build_uncertain_correlation_generator(const Vec& volatilities,
                                                      const std::vector<Mat>& correlations);

/// lambda used by build_uncertain_correlation_generator.
double reference_correlation_scale(const std::vector<Mat>& correlations);

}  // namespace mphjb
