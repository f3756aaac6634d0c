#include "mphjb/monotone_poly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mphjb/rng.hpp"

namespace mphjb {

double normal_even_moment(int m) {
  if (m < 0) throw UsageError("normal_even_moment: m must be nonnegative");
  if (m > 15) throw UsageError("normal_even_moment: m > 15 is outside the exact range");
  std::int64_t acc = 1;
  for (std::int64_t odd = 1; odd <= 2 * m - 1; odd += 2) acc *= odd;
  return static_cast<double>(acc);
}

MonotonePolynomial::MonotonePolynomial(Mat sigma, int k, double ck)
    : sigma_(std::move(sigma)), k_(k), ck_(ck) {
  norms_ = sigma_.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < norms_.size(); ++j) {
    if (norms_(j) == 0.0) {
      throw UsageError(
          "MonotonePolynomial: Sigma has a zero column; factor with "
          "cholesky_drop_zero_columns first");
    }
  }
  K_ = norms_.squaredNorm() / (4.0 * k_ + 2.0);
}

MonotonePolynomial MonotonePolynomial::build(const Mat& sigma, int k) {
  if (k < 0) throw UsageError("MonotonePolynomial: k must be nonnegative");
  const double ck = 1.0 / (normal_even_moment(2 * k + 2) - normal_even_moment(2 * k + 1));
  return MonotonePolynomial(sigma, k, ck);
}

MonotonePolynomial MonotonePolynomial::build_with_moment(const Mat& sigma, int k,
                                                         double moment_4k2) {
  if (k < 0) throw UsageError("MonotonePolynomial: k must be nonnegative");
  if (!(moment_4k2 > 0.0)) throw UsageError("MonotonePolynomial: moment must be positive");
  return MonotonePolynomial(sigma, k, 1.0 / ((4.0 * k + 2.0) * moment_4k2));
}

double MonotonePolynomial::operator()(const Vec& w) const {
  require_dim(w.size(), sigma_.rows(), "eval_P");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < sigma_.cols(); ++j) {
    const double n = norms_(j);
    const double r = sigma_.col(j).dot(w) / n;
    // (r^2)^{2k+1} by repeated squaring.
    double base = r * r;
    double pw = 1.0;
    for (int e = 2 * k_ + 1; e > 0; e >>= 1) {
      if (e & 1) pw *= base;
      base *= base;
    }
    acc += pw * n * n;
  }
  return ck_ * acc - K_;
}

double eval_P(const MonotonePolynomial& p, const Vec& w) { return p(w); }

int min_k_for_monotonicity(double abar) {
  if (!(abar >= 0.0)) throw UsageError("min_k_for_monotonicity: abar must be nonnegative");
  int k = 0;
  while (!(abar < 4.0 * k + 2.0)) ++k;
  return k;
}

double one_step_weight(const MonotonePolynomial& p, const Vec& drift_gap,
                       const Mat& sigma_bar_inv_T, double delta, double h, const Vec& w) {
  double drift_term = 0.0;
  if (drift_gap.size() > 0) drift_term = drift_gap.dot(sigma_bar_inv_T * w);
  return 1.0 + std::sqrt(h) * drift_term - h * delta + p(w);
}

WeightProbe probe_weights(const MonotonePolynomial& p, const Vec& drift_gap,
                          const Mat& sigma_bar_inv_T, double delta, double h,
                          std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw UsageError("probe_weights: need at least one sample");
  const int d = p.rows();
  Vec w(d);
  double min_w = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    for (int c = 0; c < d; ++c) w(c) = rng::normal(seed, rng::kProbe, i, 0, static_cast<std::uint64_t>(c));
    const double pv = p(w);
    sum += pv;
    sum_sq += pv * pv;
    min_w = std::min(min_w, one_step_weight(p, drift_gap, sigma_bar_inv_T, delta, h, w));
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {min_w, mean, std::sqrt(var / n), samples};
}

std::optional<double> monotonicity_threshold(const MonotonePolynomial& p, const Vec& drift_gap,
                                             const Mat& sigma_bar_inv_T, double delta,
                                             double h_lo, double h_hi, std::size_t samples,
                                             std::uint64_t seed, int iterations) {
  auto ok = [&](double h) {
    return probe_weights(p, drift_gap, sigma_bar_inv_T, delta, h, samples, seed).min_weight >= 0.0;
  };
  if (!ok(h_lo)) return std::nullopt;
  if (ok(h_hi)) return h_hi;
  double lo = h_lo;
  double hi = h_hi;
  for (int i = 0; i < iterations; ++i) {
    const double mid = std::sqrt(lo * hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace mphjb
