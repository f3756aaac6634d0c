#include "mphjb/maxplus_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>

#include "mphjb/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#ifdef __AVX512F__
#include <immintrin.h>
#endif

namespace mphjb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::size_t kLanes = 8;

}  // namespace

void SolverConfig::validate(int dimension, double horizon) const {
  if (!(h > 0.0)) throw ConfigurationError("solver: h must be positive");
  integral_step_count(horizon, h);
  if (n_in == 0 || n_x == 0 || n_w == 0) {
    throw ConfigurationError("solver: N_in, N_x and N_w must be positive");
  }
  if (n_x > n_in) throw ConfigurationError("solver: N_x must not exceed N_in");
  const std::size_t basis = quadratic_basis_size(dimension);
  if (n_x < basis) {
    throw ConfigurationError("solver: N_x = " + std::to_string(n_x) +
                             " is below the quadratic basis size " + std::to_string(basis));
  }
  if (k && *k < 0) throw ConfigurationError("solver: k must be nonnegative");
  if (!(ridge >= 0.0)) throw ConfigurationError("solver: ridge must be nonnegative");
  require_dim(sampler.dimension(), dimension, "solver initial sampler");
}

std::size_t quadratic_basis_size(int dimension) {
  const auto d = static_cast<std::size_t>(dimension);
  return (d + 1) * (d + 2) / 2;
}

Vec quadratic_features(const Vec& x) {
  const auto d = x.size();
  Vec f(static_cast<Eigen::Index>(quadratic_basis_size(static_cast<int>(d))));
  f(0) = 1.0;
  f.segment(1, d) = x;
  Eigen::Index i = d + 1;
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a; b < d; ++b) f(i++) = x(a) * x(b);
  return f;
}

Vec form_coefficients(const QuadraticForm& z) {
  const auto d = z.dimension();
  Vec c(static_cast<Eigen::Index>(quadratic_basis_size(d)));
  c(0) = z.c();
  c.segment(1, d) = z.b();
  Eigen::Index i = d + 1;
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a; b < d; ++b) c(i++) = a == b ? 0.5 * z.Q()(a, a) : z.Q()(a, b);
  return c;
}

QuadraticForm form_from_coefficients(const Vec& coef, int dimension) {
  require_dim(coef.size(), static_cast<Eigen::Index>(quadratic_basis_size(dimension)),
              "form_from_coefficients");
  const Eigen::Index d = dimension;
  Mat Q = Mat::Zero(d, d);
  Eigen::Index i = d + 1;
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = a; b < d; ++b) {
      if (a == b) {
        Q(a, a) = 2.0 * coef(i);
      } else {
        Q(a, b) = coef(i);
        Q(b, a) = coef(i);
      }
      ++i;
    }
  }
  return QuadraticForm(std::move(Q), coef.segment(1, d), coef(0));
}

Mat feature_columns(const Mat& points) {
  const Eigen::Index d = points.rows();
  const Eigen::Index n = points.cols();
  Mat F(static_cast<Eigen::Index>(quadratic_basis_size(static_cast<int>(d))), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double* f = F.col(j).data();
    const double* x = points.col(j).data();
    f[0] = 1.0;
    for (Eigen::Index a = 0; a < d; ++a) f[1 + a] = x[a];
    Eigen::Index i = d + 1;
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = a; b < d; ++b) f[i++] = x[a] * x[b];
  }
  return F;
}

FormTable::FormTable(const std::vector<QuadraticForm>& forms) : count_(forms.size()) {
  if (forms.empty()) throw UsageError("FormTable: empty form set");
  const int d = forms.front().dimension();
  features_ = quadratic_basis_size(d);
  padded_ = (count_ + kLanes - 1) / kLanes * kLanes;
  coef_.assign(features_ * padded_, 0.0);
  for (std::size_t z = count_; z < padded_; ++z) coef_[z] = -std::numeric_limits<double>::infinity();
  for (std::size_t z = 0; z < count_; ++z) {
    require_dim(forms[z].dimension(), d, "FormTable");
    const Vec c = form_coefficients(forms[z]);
    for (std::size_t f = 0; f < features_; ++f) coef_[f * padded_ + z] = c(static_cast<Eigen::Index>(f));
  }
}

// Every evaluation path uses the same sequence: start from the constant
// coefficient, then one fma per remaining feature, so values agree bitwise.
double FormTable::value(std::size_t z, const double* x) const {
  double v = coef_[z];
  for (std::size_t f = 1; f < features_; ++f) v = std::fma(coef_[f * padded_ + z], x[f], v);
  return v;
}

void FormTable::argmax(const Mat& point_features, std::vector<std::size_t>& index) const {
  require_dim(point_features.rows(), static_cast<Eigen::Index>(features_), "FormTable::argmax");
  const auto n = static_cast<std::size_t>(point_features.cols());
  index.resize(n);
  const double* coef = coef_.data();
  const std::size_t P = padded_;
  const std::size_t nf = features_;
  std::size_t j = 0;

#ifdef __AVX512F__
  // Eight points share each coefficient load; same fma order as value().
  constexpr std::size_t kBlock = 8;
  const __m512d lane = _mm512_set_pd(7, 6, 5, 4, 3, 2, 1, 0);
  for (; j + kBlock <= n; j += kBlock) {
    __m512d best[kBlock];
    __m512d bi[kBlock];
    const double* x[kBlock];
    for (std::size_t b = 0; b < kBlock; ++b) {
      best[b] = _mm512_set1_pd(-std::numeric_limits<double>::infinity());
      bi[b] = lane;
      x[b] = point_features.col(static_cast<Eigen::Index>(j + b)).data();
    }
    for (std::size_t z0 = 0; z0 < P; z0 += kLanes) {
      const __m512d c0 = _mm512_loadu_pd(coef + z0);
      __m512d v[kBlock];
      for (std::size_t b = 0; b < kBlock; ++b) v[b] = c0;
      for (std::size_t f = 1; f < nf; ++f) {
        const __m512d cf = _mm512_loadu_pd(coef + f * P + z0);
        for (std::size_t b = 0; b < kBlock; ++b)
          v[b] = _mm512_fmadd_pd(cf, _mm512_set1_pd(x[b][f]), v[b]);
      }
      const __m512d zi = _mm512_add_pd(lane, _mm512_set1_pd(static_cast<double>(z0)));
      for (std::size_t b = 0; b < kBlock; ++b) {
        const __mmask8 gt = _mm512_cmp_pd_mask(v[b], best[b], _CMP_GT_OQ);
        best[b] = _mm512_mask_mov_pd(best[b], gt, v[b]);
        bi[b] = _mm512_mask_mov_pd(bi[b], gt, zi);
      }
    }
    for (std::size_t b = 0; b < kBlock; ++b) {
      alignas(64) double bv[kLanes];
      alignas(64) double bx[kLanes];
      _mm512_store_pd(bv, best[b]);
      _mm512_store_pd(bx, bi[b]);
      std::size_t win = 0;
      for (std::size_t l = 1; l < kLanes; ++l)
        if (bv[l] > bv[win] || (bv[l] == bv[win] && bx[l] < bx[win])) win = l;
      const auto pick = static_cast<std::size_t>(bx[win]);
      index[j + b] = pick < count_ ? pick : 0;
    }
  }
#endif

  for (; j < n; ++j) {
    const double* x = point_features.col(static_cast<Eigen::Index>(j)).data();
    alignas(64) double best[kLanes];
    alignas(64) std::int64_t bi[kLanes];
    for (std::size_t l = 0; l < kLanes; ++l) {
      best[l] = -std::numeric_limits<double>::infinity();
      bi[l] = static_cast<std::int64_t>(l);
    }
    for (std::size_t z0 = 0; z0 < P; z0 += kLanes) {
      alignas(64) double v[kLanes];
      for (std::size_t l = 0; l < kLanes; ++l) v[l] = coef[z0 + l];
      for (std::size_t f = 1; f < nf; ++f) {
        const double xf = x[f];
        const double* cf = coef + f * P + z0;
        for (std::size_t l = 0; l < kLanes; ++l) v[l] = std::fma(cf[l], xf, v[l]);
      }
      for (std::size_t l = 0; l < kLanes; ++l) {
        const bool gt = v[l] > best[l];
        best[l] = gt ? v[l] : best[l];
        bi[l] = gt ? static_cast<std::int64_t>(z0 + l) : bi[l];
      }
    }
    // Each lane holds its earliest maximiser; resolve ties across lanes by index.
    std::size_t win = 0;
    for (std::size_t l = 1; l < kLanes; ++l) {
      if (best[l] > best[win] || (best[l] == best[win] && bi[l] < bi[win])) win = l;
    }
    const auto pick = static_cast<std::size_t>(bi[win]);
    index[j] = pick < count_ ? pick : 0;
  }
}

Vec FormTable::max_value(const Mat& point_features) const {
  require_dim(point_features.rows(), static_cast<Eigen::Index>(features_), "FormTable::max_value");
  const Eigen::Index n = point_features.cols();
  Vec out(n);
  const double* coef = coef_.data();
  const std::size_t P = padded_;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double* x = point_features.col(j).data();
    alignas(64) double best[kLanes];
    for (std::size_t l = 0; l < kLanes; ++l) best[l] = -std::numeric_limits<double>::infinity();
    for (std::size_t z0 = 0; z0 < P; z0 += kLanes) {
      alignas(64) double v[kLanes];
      for (std::size_t l = 0; l < kLanes; ++l) v[l] = coef[z0 + l];
      for (std::size_t f = 1; f < features_; ++f) {
        const double xf = x[f];
        const double* cf = coef + f * P + z0;
        for (std::size_t l = 0; l < kLanes; ++l) v[l] = std::fma(cf[l], xf, v[l]);
      }
      for (std::size_t l = 0; l < kLanes; ++l) best[l] = std::max(best[l], v[l]);
    }
    out(j) = *std::max_element(best, best + kLanes);
  }
  return out;
}

Vec sup_values(const std::vector<QuadraticForm>& Z, const Mat& points) {
  const FormTable table(Z);
  return table.max_value(feature_columns(points));
}

namespace {

// S^r(x, dW_j) for every column of `increments`.
Mat successors(const GeneratorChoice& gen, std::size_t r, const Vec& x, const Mat& increments,
               double h) {
  Mat pts = gen.volatility(r, x) * increments;
  Vec shift = x;
  if (gen.retained.at(r).drift) shift += gen.drift(r, x) * h;
  pts.colwise() += shift;
  return pts;
}

}  // namespace

std::vector<std::size_t> select_optimal_forms(const std::vector<QuadraticForm>& Z_next,
                                              std::size_t r, const Vec& x_t,
                                              const Mat& increments,
                                              const GeneratorChoice& generator, double h) {
  const FormTable table(Z_next);
  std::vector<std::size_t> out;
  table.argmax(feature_columns(successors(generator, r, x_t, increments, h)), out);
  return out;
}

QuadraticRegression::QuadraticRegression(const Mat& states, double ridge)
    : d_(static_cast<int>(states.rows())) {
  const Eigen::Index n = states.cols();
  const auto p = static_cast<Eigen::Index>(quadratic_basis_size(d_));
  if (n == 0) throw UsageError("QuadraticRegression: no design states");
  mean_ = states.rowwise().mean();
  scale_ = Vec::Ones(d_);
  for (int c = 0; c < d_; ++c) {
    const double sd =
        std::sqrt((states.row(c).array() - mean_(c)).square().sum() / static_cast<double>(n));
    if (sd > 1e-12 * std::max(1.0, std::abs(mean_(c)))) scale_(c) = sd;
  }
  const Mat standard = (states.colwise() - mean_).array().colwise() / scale_.array();
  design_ = feature_columns(standard).transpose();  // n x p

  Eigen::JacobiSVD<Mat> svd(design_);
  const Vec& sv = svd.singularValues();
  rank_ = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * sv(0)) ++rank_;

  const Mat normal = design_.transpose() * design_;
  if (rank_ < static_cast<std::size_t>(p) && ridge == 0.0) {
    // Name the monomials carried by the null space.
    Eigen::JacobiSVD<Mat> full(normal, Eigen::ComputeFullV);
    const Vec null_dir = full.matrixV().col(p - 1);
    std::vector<std::string> names{"1"};
    for (int a = 0; a < d_; ++a) names.push_back("x" + std::to_string(a + 1));
    for (int a = 0; a < d_; ++a)
      for (int b = a; b < d_; ++b)
        names.push_back("x" + std::to_string(a + 1) + "*x" + std::to_string(b + 1));
    std::ostringstream msg;
    msg << "regression design is rank deficient (rank " << rank_ << " of " << p
        << "); unidentified monomials:";
    for (Eigen::Index i = 0; i < p; ++i)
      if (std::abs(null_dir(i)) > 0.1) msg << ' ' << names[static_cast<std::size_t>(i)];
    throw NumericalError(msg.str());
  }
  // The intercept is not penalised, so constant responses are fitted exactly.
  const double lambda = ridge * normal.trace() / static_cast<double>(p);
  Mat reg = normal;
  reg.diagonal().tail(p - 1).array() += lambda;
  Eigen::LLT<Mat> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("regression normal matrix is not positive definite");
  }
  solve_ = llt.solve(design_.transpose());
}

QuadraticRegression::Fit QuadraticRegression::fit(const Vec& responses) const {
  require_dim(responses.size(), design_.rows(), "QuadraticRegression::fit");
  const Vec beta = solve_ * responses;
  const Vec resid = responses - design_ * beta;

  // Back to original coordinates: x~ = D (x - mu), D = diag(1 / scale).
  const QuadraticForm standard = form_from_coefficients(beta, d_);
  const Vec Dinv = scale_.cwiseInverse();
  const Mat Q = Dinv.asDiagonal() * standard.Q() * Dinv.asDiagonal();
  const Vec b = Dinv.cwiseProduct(standard.b()) - Q * mean_;
  const double c = standard.c() - standard.b().dot(Dinv.cwiseProduct(mean_)) +
                   0.5 * mean_.dot(Q * mean_);
  Fit out{QuadraticForm(0.5 * (Q + Q.transpose()), b, c), 0.0, resid.squaredNorm()};
  out.max_residual = resid.size() ? resid.cwiseAbs().maxCoeff() : 0.0;
  return out;
}

RegressionDesign draw_design(const SamplePaths& paths, std::size_t r, std::size_t t,
                             std::size_t n_x, std::size_t n_w, std::uint64_t seed) {
  const std::size_t n_in = paths.path_count();
  const int d = paths.dimension();
  RegressionDesign out;
  out.states.resize(d, static_cast<Eigen::Index>(n_x));
  out.increments.resize(d, static_cast<Eigen::Index>(n_w));
  const Mat& X = paths.states(r, t);
  const Mat& W = paths.increments(t);
  for (std::size_t i = 0; i < n_x; ++i) {
    const auto w = static_cast<std::size_t>(rng::index(seed, rng::kStateSubsample, t, i, n_in));
    out.state_paths.push_back(w);
    out.states.col(static_cast<Eigen::Index>(i)) = X.col(static_cast<Eigen::Index>(w));
  }
  for (std::size_t j = 0; j < n_w; ++j) {
    const auto w = static_cast<std::size_t>(rng::index(seed, rng::kIncrementSubsample, t, j, n_in));
    out.increment_paths.push_back(w);
    out.increments.col(static_cast<Eigen::Index>(j)) = W.col(static_cast<Eigen::Index>(w));
  }
  return out;
}

namespace {

// Everything about one (time step, class) that does not depend on the
// selection: successor features, polynomial values and one-step weights at
// each design state, and the regression operator.
// Rescales the weights 1 + P_j to sample mean one: P'_j = (1 + P_j) / (1 + mean P) - 1.
// The sample then has E[P'] = 0 exactly, so constants pass through unchanged,
// and 1 + P' >= 0 wherever 1 + P >= 0.
Vec normalized_weight_polynomial(const Vec& P) {
  if (P.size() == 0) return P;
  const double mass = 1.0 + P.mean();
  if (!(mass > 0.0)) {
    throw NumericalError("weight polynomial has nonpositive sample mass " + std::to_string(mass));
  }
  return ((P.array() + 1.0) / mass - 1.0).matrix();
}

struct ClassStep {
  const ProblemSpec& spec;
  const GeneratorChoice& gen;
  std::size_t r;
  double h;
  int k;
  bool normalize;
  std::vector<std::size_t> modes;
  IncrementSample inc;
  std::vector<Mat> features;                 // per design state: basis x N_w
  std::vector<Mat> sbar;                     // per design state
  std::vector<std::vector<Vec>> P;           // [state][mode] P(dW_j / sqrt h)
  std::vector<std::vector<Vec>> weight;      // [state][mode] one-step weight
  std::vector<Vec> shared_P;                 // per mode, constant factors only
  QuadraticRegression regression;
  double min_weight = std::numeric_limits<double>::infinity();
  std::size_t negative_weights = 0;

  ClassStep(const ProblemSpec& spec_, const GeneratorChoice& gen_, std::size_t r_,
            const RegressionDesign& design, double h_, int k_, double ridge, bool normalize_)
      : spec(spec_),
        gen(gen_),
        r(r_),
        h(h_),
        k(k_),
        normalize(normalize_),
        modes(gen_.modes_in_class(r_)),
        inc(IncrementSample::from_monte_carlo(design.increments, h_)),
        regression(design.states, ridge) {
    const auto n_x = static_cast<std::size_t>(design.states.cols());
    const Eigen::Index n_w = design.increments.cols();
    // P only depends on the state when the factors do.
    if (gen.constant_factors) {
      for (std::size_t m : modes)
        shared_P.push_back(
            weight_polynomial(polynomial_values(inc.polynomial(gen.constant_factors->at(m).sigma, k), inc)));
    }
    for (std::size_t i = 0; i < n_x; ++i) {
      const Vec x = design.states.col(static_cast<Eigen::Index>(i));
      features.push_back(feature_columns(successors(gen, r, x, design.increments, h)));
      sbar.push_back(gen.volatility(r, x));
      std::vector<Vec> Pi;
      std::vector<Vec> Wi = weights_at(x, sbar.back(), &Pi);
      for (const Vec& Wm : Wi) {
        for (Eigen::Index j = 0; j < n_w; ++j) {
          min_weight = std::min(min_weight, Wm(j));
          if (Wm(j) < 0.0) ++negative_weights;
        }
      }
      P.push_back(std::move(Pi));
      weight.push_back(std::move(Wi));
    }
  }

  Vec weight_polynomial(Vec P) const { return normalize ? normalized_weight_polynomial(P) : P; }

  // One-step weights 1 - h delta + sqrt(h) gap' sbar^{-T} w + P(w) per mode at x.
  std::vector<Vec> weights_at(const Vec& x, const Mat& sb, std::vector<Vec>* P_out) const {
    const Vec u0 = spec.zero_control();
    const double sqrt_h = std::sqrt(h);
    const Mat sb_inv_T = sb.transpose().inverse();
    std::vector<Vec> out;
    for (std::size_t q = 0; q < modes.size(); ++q) {
      const std::size_t m = modes[q];
      Vec Pm = gen.constant_factors
                   ? shared_P[q]
                   : weight_polynomial(polynomial_values(
                         inc.polynomial(residual_factor(spec, gen, m, x, u0).sigma, k), inc));
      const Vec gap = spec.drift(m, x, u0) - gen.drift(r, x);
      const double delta = spec.discount(m, x, u0);
      const Vec drift_term = inc.increments.transpose() * (sb_inv_T.transpose() * gap) / sqrt_h;
      out.emplace_back((1.0 - h * delta + sqrt_h * drift_term.array() + Pm.array()).matrix());
      if (P_out) P_out->push_back(std::move(Pm));
    }
    return out;
  }

  // Fits one form per mode. The stderr proxy is the Monte Carlo standard error
  // of the one-step estimate at `anchor` (successor features `anchor_features`,
  // same selection) combined with the regression's residual variance.
  RegressionOutput regress(const FormTable& table, const std::vector<std::size_t>& selection,
                           const Mat& design_states, const Vec& anchor,
                           const Mat& anchor_features) const {
    const auto n_x = features.size();
    const Eigen::Index n_w = inc.increments.cols();
    if (selection.size() != static_cast<std::size_t>(n_w)) {
      throw UsageError("regress_G_image: one selected form per increment");
    }
    Mat y(static_cast<Eigen::Index>(n_x), static_cast<Eigen::Index>(modes.size()));
    Vec phi(n_w);
    for (std::size_t i = 0; i < n_x; ++i) {
      const Mat& F = features[i];
      for (Eigen::Index j = 0; j < n_w; ++j)
        phi(j) = table.value(selection[static_cast<std::size_t>(j)], F.col(j).data());
      const Vec x = design_states.col(static_cast<Eigen::Index>(i));
      const DerivativeEstimates est = estimate_derivatives(phi, inc, sbar[i], modes, P[i]);
      for (std::size_t q = 0; q < modes.size(); ++q)
        y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) =
            apply_G(spec, gen, modes[q], x, est, h);
    }
    for (Eigen::Index j = 0; j < n_w; ++j)
      phi(j) = table.value(selection[static_cast<std::size_t>(j)], anchor_features.col(j).data());
    const std::vector<Vec> anchor_weight = weights_at(anchor, gen.volatility(r, anchor), nullptr);

    RegressionOutput out;
    out.modes = modes;
    const auto p = regression.basis_size();
    for (std::size_t q = 0; q < modes.size(); ++q) {
      QuadraticRegression::Fit f = regression.fit(y.col(static_cast<Eigen::Index>(q)));
      const Eigen::ArrayXd contrib = phi.array() * anchor_weight[q].array();
      const double mean = contrib.mean();
      const double var =
          n_w > 1 ? (contrib - mean).square().sum() / static_cast<double>(n_w - 1) : 0.0;
      const double resid_var = n_x > p ? f.rss / static_cast<double>(n_x - p) : 0.0;
      out.stderr_proxy.push_back(std::sqrt(var / static_cast<double>(n_w) + resid_var));
      out.max_residual = std::max(out.max_residual, f.max_residual);
      out.forms.push_back(std::move(f.form));
    }
    return out;
  }
};

struct FormHash {
  std::size_t operator()(const QuadraticForm& z) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    auto mix = [&h](double v) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = rng::splitmix64(h ^ bits);
    };
    for (Eigen::Index i = 0; i < z.Q().size(); ++i) mix(z.Q().data()[i]);
    for (Eigen::Index i = 0; i < z.b().size(); ++i) mix(z.b()(i));
    mix(z.c());
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

RegressionOutput regress_G_image(const ProblemSpec& spec, const GeneratorChoice& generator,
                                 std::size_t r, const RegressionDesign& design,
                                 const std::vector<QuadraticForm>& Z_next,
                                 const std::vector<std::size_t>& selection, double h, int k,
                                 double ridge, bool normalize_weights) {
  const ClassStep step(spec, generator, r, design, h, k, ridge, normalize_weights);
  const FormTable table(Z_next);
  for (std::size_t s : selection)
    if (s >= table.size()) throw UsageError("regress_G_image: selection index out of range");
  const Vec anchor = design.states.rowwise().mean();
  return step.regress(table, selection, design.states, anchor,
                      feature_columns(successors(generator, r, anchor, design.increments, h)));
}

double max_abar(const ProblemSpec& spec, const GeneratorChoice& generator,
                const SamplePaths& paths) {
  double out = 0.0;
  if (generator.constant_factors) {
    for (const auto& f : *generator.constant_factors) out = std::max(out, f.abar);
    return out;
  }
  const Vec u0 = spec.zero_control();
  for (std::size_t r = 0; r < generator.class_count(); ++r) {
    const auto modes = generator.modes_in_class(r);
    for (std::size_t t = 0; t <= paths.step_count(); ++t) {
      const Mat& X = paths.states(r, t);
      for (Eigen::Index w = 0; w < X.cols(); ++w)
        for (std::size_t m : modes)
          out = std::max(out, residual_factor(spec, generator, m, X.col(w), u0).abar);
    }
  }
  return out;
}

SolveResult backward_solve(const ProblemSpec& spec, const GeneratorChoice& generator,
                           const SolverConfig& config, const std::vector<QuadraticForm>& terminal) {
  const auto start = Clock::now();
  const int d = spec.dimension();
  config.validate(d, spec.horizon());
  generator.validate(spec.mode_count());
  const std::size_t steps = integral_step_count(spec.horizon(), config.h);
  const std::size_t classes = generator.class_count();
  if (terminal.empty()) throw ConfigurationError("solver: terminal form set is empty");
  for (const auto& z : terminal) require_dim(z.dimension(), d, "solver terminal form");
  if (terminal.size() > classes * config.n_in) {
    throw ConfigurationError("solver: |Z_T| = " + std::to_string(terminal.size()) +
                             " exceeds |retained classes| * N_in = " +
                             std::to_string(classes * config.n_in));
  }

  const auto sim_start = Clock::now();
  SimulationOptions sim;
  sim.state_floor = config.state_floor;
  SamplePaths paths =
      simulate(generator, spec.horizon(), config.h, config.n_in, config.seed, config.sampler, sim);
  const double sim_seconds = seconds_since(sim_start);

  const double abar = max_abar(spec, generator, paths);
  const int k = config.k ? *config.k : min_k_for_monotonicity(abar);

  MaxPlusValueFunction vf(d, spec.horizon(), config.h);
  vf.set_forms(steps, terminal);
  std::vector<StepDiagnostics> diags(steps);

#ifdef _OPENMP
  const int threads = config.threads > 0 ? config.threads : omp_get_max_threads();
#endif

  for (std::size_t step = steps; step-- > 0;) {
    const auto step_start = Clock::now();
    const std::vector<QuadraticForm>& Z_next = vf.forms(step + 1);
    const FormTable table(Z_next);

    std::vector<RegressionDesign> designs;
    std::vector<ClassStep> cls;
    designs.reserve(classes);
    cls.reserve(classes);
    StepDiagnostics diag;
    diag.t = vf.time_at(step);
    diag.min_weight = std::numeric_limits<double>::infinity();
    try {
      for (std::size_t r = 0; r < classes; ++r) {
        designs.push_back(draw_design(paths, r, step, config.n_x, config.n_w, config.seed));
        cls.emplace_back(spec, generator, r, designs.back(), config.h, k, config.ridge,
                         config.normalize_weights);
        diag.min_weight = std::min(diag.min_weight, cls.back().min_weight);
        diag.negative_weights += cls.back().negative_weights;
        if (cls.back().regression.rank() < cls.back().regression.basis_size()) ++diag.rank_deficient;
      }
    } catch (const std::exception& e) {
      throw NumericalError("time step " + std::to_string(step) + ": " + e.what());
    }

    const std::size_t slots = config.n_in * classes;
    std::vector<QuadraticForm> chosen(slots);
    std::vector<double> chosen_se(slots, 0.0);
    double max_resid = 0.0;
    double select_time = 0.0;
    std::string failure;
    const auto n = static_cast<std::int64_t>(config.n_in);

#pragma omp parallel for schedule(dynamic, 8) num_threads(threads) reduction(max : max_resid) reduction(+ : select_time)
    for (std::int64_t w = 0; w < n; ++w) {
      try {
        std::vector<std::size_t> selection;
        for (std::size_t r = 0; r < classes; ++r) {
          const Vec x_t = paths.states(r, step).col(w);
          const auto t0 = Clock::now();
          const Mat F_t =
              feature_columns(successors(generator, r, x_t, designs[r].increments, config.h));
          table.argmax(F_t, selection);
          select_time += seconds_since(t0);
          RegressionOutput fit = cls[r].regress(table, selection, designs[r].states, x_t, F_t);
          max_resid = std::max(max_resid, fit.max_residual);
          // Step (2c): best mode of the class at x_t, lowest mode on ties.
          std::size_t best = 0;
          double best_value = eval_quad(fit.forms[0], x_t);
          for (std::size_t q = 1; q < fit.forms.size(); ++q) {
            const double v = eval_quad(fit.forms[q], x_t);
            if (v > best_value) {
              best_value = v;
              best = q;
            }
          }
          const std::size_t slot = static_cast<std::size_t>(w) * classes + r;
          chosen[slot] = std::move(fit.forms[best]);
          chosen_se[slot] = fit.stderr_proxy[best];
        }
      } catch (const std::exception& e) {
#pragma omp critical
        if (failure.empty()) failure = e.what();
      }
    }
    if (!failure.empty()) {
      throw NumericalError("time step " + std::to_string(step) + ": " + failure);
    }

    std::vector<QuadraticForm> forms;
    std::vector<double> se;
    if (config.dedup) {
      std::unordered_map<QuadraticForm, std::size_t, FormHash> seen;
      for (std::size_t s = 0; s < slots; ++s) {
        const auto [it, inserted] = seen.emplace(chosen[s], forms.size());
        if (inserted) {
          forms.push_back(chosen[s]);
          se.push_back(chosen_se[s]);
        } else {
          se[it->second] = std::max(se[it->second], chosen_se[s]);
        }
      }
    } else {
      forms = std::move(chosen);
      se = std::move(chosen_se);
    }
    diag.candidates = slots;
    diag.forms = forms.size();
    diag.max_residual = max_resid;
    diag.max_stderr = se.empty() ? 0.0 : *std::max_element(se.begin(), se.end());
    diag.select_seconds = select_time;
    vf.set_forms(step, std::move(forms), std::move(se));
    diag.wall_seconds = seconds_since(step_start);
    diags[step] = diag;
    if (config.progress) config.progress(diag);
  }

  SolveResult out{std::move(vf), std::move(paths), k, abar, std::move(diags), sim_seconds, 0.0};
  out.total_seconds = seconds_since(start);
  return out;
}

double value_eval(const MaxPlusValueFunction& vf, double t, const Vec& x) {
  return vf.evaluate(vf.index_of(t), x).value;
}

}  // namespace mphjb
