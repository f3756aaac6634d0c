#pragma once

#include <cstdint>
#include <optional>

#include "mphjb/types.hpp"

namespace mphjb {

/// E[N^{2m}] = (2m-1)!! for a standard normal N. Exact for m <= 15.
double normal_even_moment(int m);

/// Second-derivative weight polynomial of degree 4k+2:
///
///   P(w) = c_k sum_j ([Sigma' w]_j)^{4k+2} |Sigma_.j|^{-4k} - K
///   c_k  = 1 / (E[N^{4k+4}] - E[N^{4k+2}]),   K = tr(Sigma Sigma') / (4k+2)
///
/// E[P(N)] = 0 for a standard normal vector N, and
/// h^{-1} E[v(x + sbar sqrt(h) N) P(N)] -> 1/2 tr(sbar Sigma Sigma' sbar' D2v).
/// For k = 0 this is 1/2 (|Sigma' w|^2 - tr(Sigma Sigma')).
class MonotonePolynomial {
 public:
  /// Sigma may have zero columns only if it has no columns at all (the
  /// "no second-order correction" case, P == 0).
  static MonotonePolynomial build(const Mat& sigma, int k);

  /// Same polynomial but normalised with c_k = 1 / ((4k+2) m) where m stands
  /// in for E[N^{4k+2}]. Used to evaluate the scheme under a discrete
  /// increment law; with the Gaussian moment it coincides with build().
  static MonotonePolynomial build_with_moment(const Mat& sigma, int k, double moment_4k2);

  double operator()(const Vec& w) const;

  const Mat& sigma() const { return sigma_; }
  int k() const { return k_; }
  int degree() const { return 4 * k_ + 2; }
  double ck() const { return ck_; }
  double K() const { return K_; }
  const Vec& column_norms() const { return norms_; }
  int rows() const { return static_cast<int>(sigma_.rows()); }

 private:
  MonotonePolynomial(Mat sigma, int k, double ck);

  Mat sigma_;
  int k_ = 0;
  double ck_ = 0.0;
  double K_ = 0.0;
  Vec norms_;
};

double eval_P(const MonotonePolynomial& p, const Vec& w);

/// Smallest k with abar < 4k + 2.
int min_k_for_monotonicity(double abar);

/// Full one-step weight multiplying phi(x + sbar sqrt(h) w):
///   1 + h^{1/2} drift_gap . (sbar_inv_T w) - h delta + P(w)
double one_step_weight(const MonotonePolynomial& p, const Vec& drift_gap,
                       const Mat& sigma_bar_inv_T, double delta, double h, const Vec& w);

struct WeightProbe {
  double min_weight;
  double mean_P;
  double stderr_P;
  std::size_t samples;
};

/// Minimum of one_step_weight and sample mean of P over `samples` seeded
/// standard-normal w.
WeightProbe probe_weights(const MonotonePolynomial& p, const Vec& drift_gap,
                          const Mat& sigma_bar_inv_T, double delta, double h,
                          std::size_t samples, std::uint64_t seed);

/// Largest h in [h_lo, h_hi] (bisection, `iterations` halvings) for which the
/// sampled minimum weight is nonnegative; nullopt if even h_lo fails.
std::optional<double> monotonicity_threshold(const MonotonePolynomial& p, const Vec& drift_gap,
                                             const Mat& sigma_bar_inv_T, double delta,
                                             double h_lo, double h_hi, std::size_t samples,
                                             std::uint64_t seed, int iterations = 40);

}  // namespace mphjb
