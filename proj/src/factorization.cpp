#include "mphjb/factorization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mphjb {

std::vector<std::size_t> GeneratorChoice::modes_in_class(std::size_t r) const {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < projection.size(); ++m)
    if (projection[m] == r) out.push_back(m);
  return out;
}

Vec GeneratorChoice::drift(std::size_t r, const Vec& x) const {
  const auto& g = retained.at(r);
  return g.drift ? g.drift(x) : Vec::Zero(x.size());
}

Mat GeneratorChoice::volatility(std::size_t r, const Vec& x) const {
  return retained.at(r).volatility(x);
}

void GeneratorChoice::validate(std::size_t mode_count) const {
  if (retained.empty()) throw ConfigurationError("generator: no retained classes");
  if (projection.size() != mode_count) {
    throw ConfigurationError("generator: projection must cover every mode");
  }
  if (representative.size() != retained.size()) {
    throw ConfigurationError("generator: one representative per retained class");
  }
  for (std::size_t r = 0; r < retained.size(); ++r) {
    if (!retained[r].volatility) throw ConfigurationError("generator: missing volatility");
    if (representative[r] >= mode_count || projection[representative[r]] != r) {
      throw ConfigurationError("generator: projection does not fix its representatives");
    }
  }
  for (std::size_t p : projection) {
    if (p >= retained.size()) throw ConfigurationError("generator: projection out of range");
  }
  if (constant_factors && constant_factors->size() != mode_count) {
    throw ConfigurationError("generator: constant factors must cover every mode");
  }
}

GeneratorChoice single_class_generator(Generator g, std::size_t mode_count) {
  GeneratorChoice out;
  out.retained.push_back(std::move(g));
  out.representative = {0};
  out.projection.assign(mode_count, 0);
  return out;
}

namespace {

// sbar^{-1} via SVD with a condition check.
Mat checked_inverse(const Mat& sbar) {
  Eigen::JacobiSVD<Mat> svd(sbar, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0) || s(0) / smin > kMaxGeneratorCondition) {
    std::ostringstream msg;
    msg << "generator volatility is singular (condition number "
        << (smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity()) << ")";
    throw NumericalError(msg.str());
  }
  return svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

}  // namespace

Mat residual_matrix(const ProblemSpec& spec, const GeneratorChoice& gen, std::size_t m,
                    const Vec& x, const Vec& u) {
  const int d = spec.dimension();
  require_dim(x.size(), d, "residual_matrix");
  const Mat sbar = gen.volatility(gen.class_of(m), x);
  const Mat sigma = spec.volatility(m, x, u);
  if (sbar.rows() != d || sbar.cols() != d || sigma.rows() != d) {
    throw ConfigurationError("residual_matrix: volatility shapes do not match the dimension");
  }
  const Mat inv = checked_inverse(sbar);
  const Mat gap = sigma * sigma.transpose() - sbar * sbar.transpose();
  Mat R = inv * gap * inv.transpose();
  R = 0.5 * (R + R.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> eig(R, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  if (lo < -1e-8 * (1.0 + R.norm())) {
    std::ostringstream msg;
    msg << "domination violated for mode " << m << ": residual eigenvalue " << lo;
    throw NumericalError(msg.str());
  }
  return R;
}

Mat cholesky_drop_zero_columns(const Mat& S, double rel_tol) {
  if (S.rows() != S.cols()) throw UsageError("cholesky_drop_zero_columns: S must be square");
  const Eigen::Index d = S.rows();
  const double trace = S.trace();
  const double tol = d > 0 ? rel_tol * std::max(trace, 0.0) / static_cast<double>(d) : 0.0;

  Mat L = Mat::Zero(d, d);
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < d; ++j) {
    double pivot = S(j, j);
    for (Eigen::Index k : kept) pivot -= L(j, k) * L(j, k);
    if (pivot < -tol) {
      std::ostringstream msg;
      msg << "cholesky_drop_zero_columns: matrix is indefinite (pivot " << pivot << ")";
      throw NumericalError(msg.str());
    }
    if (pivot <= tol) continue;
    const double ljj = std::sqrt(pivot);
    L(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < d; ++i) {
      double v = S(i, j);
      for (Eigen::Index k : kept) v -= L(i, k) * L(j, k);
      L(i, j) = v / ljj;
    }
    kept.push_back(j);
  }

  Mat out(d, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = L.col(kept[c]);

  const double err = (out * out.transpose() - S).norm();
  if (err > 1e-9 * (1.0 + S.norm())) {
    std::ostringstream msg;
    msg << "cholesky_drop_zero_columns: reconstruction error " << err
        << " (matrix is not positive semidefinite)";
    throw NumericalError(msg.str());
  }
  return out;
}

ResidualFactor residual_factor(const ProblemSpec& spec, const GeneratorChoice& gen,
                               std::size_t m, const Vec& x, const Vec& u) {
  if (gen.constant_factors) return gen.constant_factors->at(m);
  ResidualFactor f;
  f.sigma = cholesky_drop_zero_columns(residual_matrix(spec, gen, m, x, u));
  f.abar = f.sigma.squaredNorm();
  return f;
}

void validate_correlation(const Mat& corr) {
  if (corr.rows() != corr.cols() || corr.rows() == 0) {
    throw ConfigurationError("correlation matrix must be square and nonempty");
  }
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    if (std::abs(corr(i, i) - 1.0) > 1e-12) {
      throw ConfigurationError("correlation matrix must have a unit diagonal");
    }
  }
  if ((corr - corr.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ConfigurationError("correlation matrix must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(corr, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues()(0) < -1e-12) {
    throw ConfigurationError("correlation matrix is not positive semidefinite");
  }
}

double reference_correlation_scale(const std::vector<Mat>& correlations) {
  if (correlations.empty()) throw ConfigurationError("correlation set is empty");
  double lambda = std::numeric_limits<double>::infinity();
  for (const auto& c : correlations) {
    validate_correlation(c);
    Eigen::SelfAdjointEigenSolver<Mat> eig(c, Eigen::EigenvaluesOnly);
    lambda = std::min(lambda, eig.eigenvalues()(0));
  }
  return lambda;
}

GeneratorChoice build_uncertain_correlation_generator(const Vec& volatilities,
                                                      const std::vector<Mat>& correlations) {
  const Eigen::Index d = volatilities.size();
  for (const auto& c : correlations) require_dim(c.rows(), d, "uncertain correlation generator");
  const double lambda = reference_correlation_scale(correlations);
  if (!(lambda > 1e-12)) {
    throw NumericalError(
        "uncertain correlation generator: a correlation matrix is singular, the reference "
        "diffusion would be degenerate");
  }

  const double root = std::sqrt(lambda);
  Generator g;
  g.volatility = [volatilities, root](const Vec& x) -> Mat {
    return (root * volatilities.cwiseProduct(x)).asDiagonal();
  };
  GeneratorChoice out = single_class_generator(std::move(g), correlations.size());

  std::vector<ResidualFactor> factors;
  factors.reserve(correlations.size());
  const Mat I = Mat::Identity(d, d);
  for (const auto& c : correlations) {
    ResidualFactor f;
    f.sigma = cholesky_drop_zero_columns((c - lambda * I) / lambda);
    f.abar = f.sigma.squaredNorm();
    factors.push_back(std::move(f));
  }
  out.constant_factors = std::move(factors);
  return out;
}

}  // namespace mphjb
