#include <doctest.h>

#include <cmath>
#include <random>

#include "mphjb/monotone_poly.hpp"
#include "mphjb/rng.hpp"
#include "mphjb/scheme_ops.hpp"
#include "test_support.hpp"

using namespace mphjb;

TEST_CASE("even normal moments") {
  CHECK(normal_even_moment(0) == 1.0);
  CHECK(normal_even_moment(1) == 1.0);
  CHECK(normal_even_moment(2) == 3.0);
  CHECK(normal_even_moment(6) == 10395.0);
  CHECK(normal_even_moment(15) == 6190283353629375.0);
  CHECK_THROWS_AS(normal_even_moment(16), UsageError);
  CHECK_THROWS_AS(normal_even_moment(-1), UsageError);
}

TEST_CASE("polynomial constants") {
  CHECK(MonotonePolynomial::build(Mat::Identity(1, 1), 0).ck() == 0.5);
  CHECK(MonotonePolynomial::build(Mat::Identity(1, 1), 2).ck() == doctest::Approx(1.0 / 9450.0).epsilon(1e-15));
  CHECK(MonotonePolynomial::build(Mat::Identity(2, 2), 0).K() == 1.0);
  Mat s(2, 1);
  s << 2, 2;
  const auto p = MonotonePolynomial::build(s, 2);
  CHECK(p.K() == doctest::Approx(8.0 / 10.0));
  CHECK(p.degree() == 10);
  CHECK_THROWS_AS(MonotonePolynomial::build(Mat::Zero(2, 1), 0), UsageError);
  CHECK_THROWS_AS(MonotonePolynomial::build(Mat::Identity(2, 2), -1), UsageError);
}

TEST_CASE("eval_P on hand-computed points") {
  const auto p = MonotonePolynomial::build(Mat::Identity(1, 1), 0);
  CHECK(eval_P(p, Vec::Ones(1)) == 0.0);
  CHECK(eval_P(p, Vec::Zero(1)) == -0.5);

  std::mt19937_64 g(2);
  for (int k = 0; k <= 3; ++k) {
    const auto q = MonotonePolynomial::build(testing::random_matrix(g, 3, 2), k);
    CHECK(eval_P(q, Vec::Zero(3)) == -q.K());
  }

  // k = 1, single column a: c_1 (a.w)^6 / |a|^4 - |a|^2 / 6.
  Vec a(2);
  a << 1.5, -0.5;
  Vec w(2);
  w << 0.7, 1.3;
  const auto q = MonotonePolynomial::build(Mat(a), 1);
  const double expect = std::pow(a.dot(w), 6) / std::pow(a.squaredNorm(), 2) / (105.0 - 15.0) -
                        a.squaredNorm() / 6.0;
  CHECK(eval_P(q, w) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("k = 0 reduces to the contracted second-order weight") {
  std::mt19937_64 g(7);
  for (int i = 0; i < 1000; ++i) {
    const int d = 1 + static_cast<int>(g() % 4);
    const int l = 1 + static_cast<int>(g() % d);
    const Mat S = testing::random_matrix(g, d, l);
    const Vec w = testing::random_vector(g, d, 2.0);
    const Mat A = S * S.transpose();
    const double ftw = 0.5 * (A * (w * w.transpose() - Mat::Identity(d, d))).trace();
    const double v = eval_P(MonotonePolynomial::build(S, 0), w);
    CHECK(std::abs(v - ftw) <= 1e-12 * std::max(1.0, std::abs(ftw)));
  }
}

TEST_CASE("minimal k for monotonicity") {
  CHECK(min_k_for_monotonicity(0.0) == 0);
  CHECK(min_k_for_monotonicity(1.0) == 0);
  CHECK(min_k_for_monotonicity(2.0) == 1);
  CHECK(min_k_for_monotonicity(4.0 / 3.0) == 0);
  CHECK(min_k_for_monotonicity(8.0) == 2);
  CHECK(min_k_for_monotonicity(6.0) == 2);
  CHECK(min_k_for_monotonicity(20.0) == 5);
  CHECK_THROWS_AS(min_k_for_monotonicity(-1.0), UsageError);
}

TEST_CASE("one-step weight") {
  const auto p = MonotonePolynomial::build(Mat::Identity(2, 2), 0);
  CHECK(one_step_weight(p, Vec::Zero(2), Mat::Identity(2, 2), 0.0, 0.01, Vec::Zero(2)) == 1.0 - p.K());
  const auto edge = MonotonePolynomial::build(Mat::Constant(1, 1, std::sqrt(2.0)), 0);
  CHECK(one_step_weight(edge, Vec::Zero(1), Mat::Identity(1, 1), 0.0, 0.01, Vec::Zero(1)) ==
        doctest::Approx(0.0).epsilon(1e-15));

  Vec gap(2);
  gap << 0.5, -1.0;
  Vec w(2);
  w << 0.3, 0.9;
  const Mat sinv = 2.0 * Mat::Identity(2, 2);
  const double h = 0.04;
  CHECK(one_step_weight(p, gap, sinv, 0.25, h, w) ==
        doctest::Approx(1.0 + 0.2 * gap.dot(sinv * w) - h * 0.25 + eval_P(p, w)));
}

TEST_CASE("sampled mean of P is zero") {
  std::mt19937_64 g(13);
  for (int trial = 0; trial < 6; ++trial) {
    const int d = 2 + trial % 2;
    const int k = trial % 4;
    const auto p = MonotonePolynomial::build(testing::random_matrix(g, d, d), k);
    const WeightProbe probe = probe_weights(p, Vec(), Mat::Identity(d, d), 0.0, 0.01, 100000, 100 + trial);
    CHECK(std::abs(probe.mean_P) <= 4.0 * probe.stderr_P);
  }
}

TEST_CASE("second-derivative identity, exact and sampled") {
  std::mt19937_64 g(17);
  const int d = 2;
  for (int k = 0; k <= 3; ++k) {
    const Mat S = testing::random_matrix(g, d, 2);
    const Mat sbar = testing::random_matrix(g, d, d) + 2.0 * Mat::Identity(d, d);
    const Mat Gamma = testing::random_symmetric(g, d);
    const Vec x = testing::random_vector(g, d);
    const auto p = MonotonePolynomial::build(S, k);
    const double target = 0.5 * (sbar * S * S.transpose() * sbar.transpose() * Gamma).trace();
    auto v = [&](const Vec& y) { return 0.5 * y.dot(Gamma * y); };

    // Exact Gaussian expectation of a polynomial of degree 4k + 4.
    const double h = 0.01;
    const IncrementSample q = gaussian_quadrature_increments(d, 4 * k + 6, h);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < q.increments.cols(); ++j) {
      const Vec w = q.increments.col(j) / std::sqrt(h);
      acc += q.weights(j) * v(x + sbar * q.increments.col(j)) * p(w);
    }
    CHECK(acc / h == doctest::Approx(target).epsilon(1e-9));

    // Monte Carlo, k <= 1 (higher degrees are too heavy-tailed for a unit test).
    if (k > 1) continue;
    const std::size_t n = 200000;
    double sum = 0.0;
    double sum_sq = 0.0;
    Vec w(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) w(c) = rng::normal(99, rng::kProbe, static_cast<std::uint64_t>(k), i, c);
      const double s = v(x + sbar * std::sqrt(h) * w) * p(w) / h;
      sum += s;
      sum_sq += s * s;
    }
    const double mean = sum / static_cast<double>(n);
    const double se = std::sqrt((sum_sq / static_cast<double>(n) - mean * mean) / static_cast<double>(n));
    CHECK(std::abs(mean - target) <= 4.0 * se);
  }
}

TEST_CASE("monotonicity threshold probe") {
  Mat s(2, 1);
  s << 2, 2;  // abar = 8
  const auto p0 = MonotonePolynomial::build(s, 0);
  const auto p2 = MonotonePolynomial::build(s, 2);
  const Mat I = Mat::Identity(2, 2);
  // Without drift or discount the weight does not depend on h.
  CHECK(probe_weights(p0, Vec::Zero(2), I, 0.0, 0.01, 100000, 1).min_weight < 0.0);
  CHECK(probe_weights(p2, Vec::Zero(2), I, 0.0, 0.01, 100000, 1).min_weight >= 0.0);

  // With a drift gap, small h stays monotone and the threshold is bracketed.
  const Vec gap = Vec::Constant(2, 3.0);
  const auto h0 = monotonicity_threshold(p2, gap, I, 0.0, 1e-8, 1.0, 20000, 3);
  REQUIRE(h0.has_value());
  CHECK(*h0 > 1e-8);
  CHECK(*h0 < 1.0);
  CHECK(probe_weights(p2, gap, I, 0.0, *h0, 20000, 3).min_weight >= 0.0);
  CHECK(!monotonicity_threshold(p0, Vec::Zero(2), I, 0.0, 1e-8, 1.0, 20000, 3).has_value());
}
