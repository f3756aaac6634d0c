#include "mphjb/scheme_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mphjb/quadrature.hpp"
#include "mphjb/simulation.hpp"

namespace mphjb {

IncrementSample IncrementSample::from_monte_carlo(Mat increments, double h) {
  if (increments.cols() == 0) throw UsageError("IncrementSample: no increments");
  IncrementSample s;
  const auto n = increments.cols();
  s.increments = std::move(increments);
  s.weights = Vec::Constant(n, 1.0 / static_cast<double>(n));
  s.h = h;
  s.monte_carlo = true;
  return s;
}

IncrementSample IncrementSample::from_weighted(Mat increments, Vec weights, double h) {
  if (increments.cols() == 0) throw UsageError("IncrementSample: no increments");
  require_dim(weights.size(), increments.cols(), "IncrementSample weights");
  IncrementSample s;
  s.increments = std::move(increments);
  s.weights = std::move(weights);
  s.h = h;
  s.monte_carlo = false;
  return s;
}

MonotonePolynomial IncrementSample::polynomial(const Mat& sigma, int k) const {
  if (normalizing_moment) return MonotonePolynomial::build_with_moment(sigma, k, normalizing_moment(k));
  return MonotonePolynomial::build(sigma, k);
}

namespace {

// Tensor product of a 1D rule over `dimension` axes; axis 0 varies fastest.
IncrementSample tensor_law(int dimension, const std::vector<double>& nodes,
                           const std::vector<double>& probs, double h) {
  if (dimension < 1) throw UsageError("increment law: dimension must be positive");
  const std::size_t n1 = nodes.size();
  std::size_t total = 1;
  for (int c = 0; c < dimension; ++c) total *= n1;
  Mat inc(dimension, static_cast<Eigen::Index>(total));
  Vec w(static_cast<Eigen::Index>(total));
  const double sqrt_h = std::sqrt(h);
  for (std::size_t j = 0; j < total; ++j) {
    std::size_t rest = j;
    double p = 1.0;
    for (int c = 0; c < dimension; ++c) {
      const std::size_t i = rest % n1;
      rest /= n1;
      inc(c, static_cast<Eigen::Index>(j)) = sqrt_h * nodes[i];
      p *= probs[i];
    }
    w(static_cast<Eigen::Index>(j)) = p;
  }
  return IncrementSample::from_weighted(std::move(inc), std::move(w), h);
}

}  // namespace

IncrementSample gaussian_quadrature_increments(int dimension, int nodes, double h) {
  const GaussRule rule = gauss_hermite_normal(nodes);
  return tensor_law(dimension, rule.nodes, rule.weights, h);
}

IncrementSample three_point_increments(int dimension, double nu, double h) {
  if (!(nu > 1.0)) throw UsageError("three_point_increments: nu must exceed 1");
  const double side = 1.0 / (2.0 * nu * nu);
  IncrementSample s = tensor_law(dimension, {-nu, 0.0, nu}, {side, 1.0 - 2.0 * side, side}, h);
  // E[N^{4k+2}] = 2 side nu^{4k+2} = nu^{4k}
  s.normalizing_moment = [nu](int k) { return std::pow(nu, 4.0 * k); };
  return s;
}

double DerivativeEstimates::D2_for(std::size_t mode) const {
  for (std::size_t i = 0; i < modes.size(); ++i)
    if (modes[i] == mode) return D2[i];
  throw UsageError("DerivativeEstimates: no second-order estimate for mode " +
                   std::to_string(mode));
}

namespace {

// Weighted mean and, for Monte Carlo laws, the standard error of the mean.
struct Moment {
  double mean;
  double se;
};

Moment weighted_moment(const Vec& values, const IncrementSample& inc) {
  const double mean = inc.weights.dot(values);
  double se = 0.0;
  const auto n = values.size();
  if (inc.monte_carlo && n > 1) {
    const double var = (values.array() - mean).square().sum() / static_cast<double>(n - 1);
    se = std::sqrt(var / static_cast<double>(n));
  }
  return {mean, se};
}

}  // namespace

Vec polynomial_values(const MonotonePolynomial& p, const IncrementSample& increments) {
  const auto n = increments.increments.cols();
  Vec out(n);
  if (p.sigma().cols() == 0) {
    out.setZero();
    return out;
  }
  const double inv_sqrt_h = 1.0 / std::sqrt(increments.h);
  for (Eigen::Index j = 0; j < n; ++j) out(j) = p(increments.increments.col(j) * inv_sqrt_h);
  return out;
}

DerivativeEstimates estimate_derivatives(const Vec& phi, const IncrementSample& increments,
                                         const Mat& sigma_bar, const std::vector<std::size_t>& modes,
                                         const std::vector<Vec>& P_values) {
  const auto n = increments.increments.cols();
  const int d = increments.dimension();
  require_dim(phi.size(), n, "estimate_derivatives phi");
  require_dim(sigma_bar.rows(), d, "estimate_derivatives sigma_bar");
  require_dim(sigma_bar.cols(), d, "estimate_derivatives sigma_bar");
  if (modes.size() != P_values.size()) {
    throw UsageError("estimate_derivatives: one polynomial evaluation per mode");
  }
  const double h = increments.h;

  DerivativeEstimates est;
  est.samples = static_cast<std::size_t>(n);
  const Moment m0 = weighted_moment(phi, increments);
  est.D0 = m0.mean;
  est.se_D0 = m0.se;

  // D1 = sbar^{-T} E[phi dW] / h
  const Mat sbar_inv_T = sigma_bar.transpose().inverse();
  est.D1 = Vec::Zero(d);
  est.se_D1 = Vec::Zero(d);
  for (int c = 0; c < d; ++c) {
    const Vec v = (phi.array() * increments.increments.row(c).transpose().array()).matrix();
    const Moment mc = weighted_moment(v, increments);
    est.D1(c) = mc.mean / h;
    est.se_D1(c) = mc.se / h;
  }
  Vec se_raw = est.se_D1;
  est.D1 = sbar_inv_T * est.D1;
  est.se_D1 = sbar_inv_T.cwiseAbs() * se_raw;

  est.modes = modes;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    require_dim(P_values[i].size(), n, "estimate_derivatives P values");
    const Vec v = (phi.array() * P_values[i].array()).matrix();
    const Moment mm = weighted_moment(v, increments);
    est.D2.push_back(mm.mean / h);
    est.se_D2.push_back(mm.se / h);
  }
  return est;
}

DerivativeEstimates estimate_derivatives(const std::function<double(const Vec& dW)>& phi,
                                         const IncrementSample& increments, const Mat& sigma_bar,
                                         const std::vector<std::size_t>& modes,
                                         const std::vector<MonotonePolynomial>& polys) {
  const auto n = increments.increments.cols();
  Vec values(n);
  for (Eigen::Index j = 0; j < n; ++j) values(j) = phi(increments.increments.col(j));
  std::vector<Vec> P;
  P.reserve(polys.size());
  for (const auto& p : polys) P.push_back(polynomial_values(p, increments));
  return estimate_derivatives(values, increments, sigma_bar, modes, P);
}

LqResult lq_maximize(const LqCoefficients& g) {
  const auto p = g.linear.size();
  if (p == 0) return {Vec(), g.constant};
  require_dim(g.hessian.rows(), p, "lq_maximize hessian");
  require_dim(g.hessian.cols(), p, "lq_maximize hessian");
  const Mat neg = -0.5 * (g.hessian + g.hessian.transpose());
  Eigen::LLT<Mat> llt(neg);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("lq_maximize: control Hessian is not negative definite");
  }
  const Vec u = llt.solve(g.linear);
  return {u, g.constant + 0.5 * g.linear.dot(u)};
}

ModeUpdate apply_G_detail(const ProblemSpec& spec, const GeneratorChoice& gen, std::size_t m,
                          const Vec& x, const DerivativeEstimates& est, double h) {
  const std::size_t r = gen.class_of(m);
  const Vec u0 = spec.zero_control();
  const Vec fbar = gen.drift(r, x);
  const double D2 = est.D2_for(m);

  LqCoefficients g;
  g.constant = (spec.drift(m, x, u0) - fbar).dot(est.D1) - spec.discount(m, x, u0) * est.D0 +
               spec.reward(m, x, u0);
  if (const auto& ctl = spec.control()) {
    const LqModeStructure& s = ctl->modes.at(m);
    g.linear = s.drift_gain.transpose() * est.D1 + s.reward_cross * x + s.reward_linear;
    g.hessian = s.reward_hessian;
  }
  const LqResult best = lq_maximize(g);
  return {est.D0 + h * (best.value + D2), best.u};
}

double apply_G(const ProblemSpec& spec, const GeneratorChoice& gen, std::size_t m, const Vec& x,
               const DerivativeEstimates& est, double h) {
  return apply_G_detail(spec, gen, m, x, est, h).value;
}

double apply_T(const SchemeContext& ctx, const std::function<double(const Vec&)>& phi,
               const Vec& x) {
  const ProblemSpec& spec = ctx.spec;
  const GeneratorChoice& gen = ctx.generator;
  const IncrementSample& inc = ctx.increments;
  const double h = inc.h;
  const Vec u0 = spec.zero_control();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < gen.class_count(); ++r) {
    const std::vector<std::size_t> modes = gen.modes_in_class(r);
    if (modes.empty()) continue;
    std::vector<MonotonePolynomial> polys;
    for (std::size_t m : modes) {
      polys.push_back(inc.polynomial(residual_factor(spec, gen, m, x, u0).sigma, ctx.k));
    }
    const auto phi_tilde = [&](const Vec& dW) { return phi(euler_step(gen, r, x, dW, h)); };
    const DerivativeEstimates est =
        estimate_derivatives(phi_tilde, inc, gen.volatility(r, x), modes, polys);
    for (std::size_t m : modes) best = std::max(best, apply_G(spec, gen, m, x, est, h));
  }
  return best;
}

Stencil1d discrete_increment_operator_1d(double A11, int k, double nu) {
  if (!(nu > 1.0)) throw UsageError("discrete_increment_operator_1d: nu must exceed 1");
  if (k < 0) throw UsageError("discrete_increment_operator_1d: k must be nonnegative");
  Stencil1d s{};
  s.b = 1.0 + (A11 - 1.0) * (nu * nu - 1.0) / (4.0 * k + 2.0);
  s.plus = s.b / (2.0 * nu * nu);
  s.minus = s.plus;
  s.center = 1.0 - s.b / (nu * nu);
  s.consistent = std::abs(s.b - A11) <= 1e-12 * std::max(1.0, std::abs(A11));
  s.monotone = s.center >= 0.0 && s.plus >= 0.0;
  s.strictly_monotone = s.center > 0.0 && s.plus >= 0.0;
  return s;
}

double Stencil2d::sum() const {
  double acc = 0.0;
  for (const auto& row : weight)
    for (double w : row) acc += w;
  return acc;
}

bool Stencil2d::monotone() const {
  for (const auto& row : weight)
    for (double w : row)
      if (w < 0.0) return false;
  return true;
}

Stencil2d discrete_increment_weights_2d(const Mat& A) {
  if (A.rows() != 2 || A.cols() != 2) throw ConfigurationError("2D stencil needs a 2x2 matrix");
  const Mat E = A - Mat::Identity(2, 2);
  const double tr = E.trace();
  Stencil2d s{};
  s.b = (1.0 + tr) / 3.0;
  for (int e1 = -1; e1 <= 1; ++e1) {
    for (int e2 = -1; e2 <= 1; ++e2) {
      double w = 0.0;
      if (e1 == 0 && e2 == 0) {
        w = 2.0 / 9.0 * (2.0 - tr);
      } else if (e2 == 0) {
        w = (3.0 * E(0, 0) + 2.0 - tr) / 18.0;
      } else if (e1 == 0) {
        w = (3.0 * E(1, 1) + 2.0 - tr) / 18.0;
      } else {
        const double quad = E(0, 0) + E(1, 1) + 2.0 * E(0, 1) * e1 * e2;
        w = (3.0 * quad + 2.0 - tr) / 72.0;
      }
      s.weight[static_cast<std::size_t>(e1 + 1)][static_cast<std::size_t>(e2 + 1)] = w;
    }
  }
  return s;
}

}  // namespace mphjb
