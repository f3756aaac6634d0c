#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mphjb/factorization.hpp"
#include "mphjb/hjb_problem.hpp"
#include "mphjb/scheme_ops.hpp"
#include "mphjb/simulation.hpp"

namespace mphjb {

struct StepDiagnostics {
  double t = 0.0;
  std::size_t forms = 0;
  std::size_t candidates = 0;      // before deduplication
  double min_weight = 0.0;         // over design states, modes and increments
  std::size_t negative_weights = 0;
  double max_residual = 0.0;
  double max_stderr = 0.0;
  std::size_t rank_deficient = 0;  // designs that needed the ridge term
  double wall_seconds = 0.0;
  double select_seconds = 0.0;     // summed over workers
};

struct SolverConfig {
  double h = 0.01;
  std::optional<int> k;  // unset: smallest k with abar < 4k + 2
  std::size_t n_in = 1000;
  std::size_t n_x = 10;
  std::size_t n_w = 1000;
  std::uint64_t seed = 1;
  double ridge = 1e-8;  // relative to tr(X'X) / basis size
  InitialSampler sampler;
  std::optional<double> state_floor;
  bool dedup = true;
  /// Rescale each sampled weight family 1 + P to mean one over the increment
  /// sample (constants then pass through a step unchanged). Off: raw means.
  bool normalize_weights = true;
  int threads = 0;  // 0: OpenMP default
  std::function<void(const StepDiagnostics&)> progress;

  /// Throws ConfigurationError for N_x > N_in, N_x below the basis size,
  /// non-integral T/h and similar.
  void validate(int dimension, double horizon) const;
};

/// Size of the quadratic monomial basis over R^d, (d+1)(d+2)/2.
std::size_t quadratic_basis_size(int dimension);

/// Monomials 1, x_1..x_d, then x_a x_b for a <= b (a outer).
Vec quadratic_features(const Vec& x);

/// Coefficients of q(., z) in the monomial basis (so q(x, z) = coef . features(x)).
Vec form_coefficients(const QuadraticForm& z);

/// Inverse of form_coefficients.
QuadraticForm form_from_coefficients(const Vec& coef, int dimension);

/// A form set laid out for fast batched maximisation.
class FormTable {
 public:
  explicit FormTable(const std::vector<QuadraticForm>& forms);

  std::size_t size() const { return count_; }
  std::size_t feature_count() const { return features_; }

  /// argmax over the table at each point; `point_features` holds one
  /// feature column per point. Lowest index wins ties.
  void argmax(const Mat& point_features, std::vector<std::size_t>& index) const;
  /// max value at each point.
  Vec max_value(const Mat& point_features) const;
  /// Value of form z at a point given its features.
  double value(std::size_t z, const double* features) const;

 private:
  std::size_t count_;
  std::size_t padded_;
  std::size_t features_;
  std::vector<double> coef_;  // feature-major, padded_ entries per feature
};

/// Feature matrix (basis x N) of the points given as columns.
Mat feature_columns(const Mat& points);

/// Batched sup_eval values over the columns of `points`.
Vec sup_values(const std::vector<QuadraticForm>& Z, const Mat& points);

/// Step-(2a) selection: for each increment j the index of the form of
/// `Z_next` maximal at S^r(x_t, dW_j); lowest index wins ties.
std::vector<std::size_t> select_optimal_forms(const std::vector<QuadraticForm>& Z_next,
                                              std::size_t r, const Vec& x_t,
                                              const Mat& increments,
                                              const GeneratorChoice& generator, double h);

/// Ridge least squares on the quadratic basis (intercept unpenalised), in
/// coordinates standardised by the design states' mean and spread, mapped
/// back to the original ones.
class QuadraticRegression {
 public:
  QuadraticRegression(const Mat& states, double ridge);

  struct Fit {
    QuadraticForm form;
    double max_residual;
    double rss;
  };
  Fit fit(const Vec& responses) const;

  std::size_t points() const { return static_cast<std::size_t>(solve_.cols()); }
  std::size_t basis_size() const { return static_cast<std::size_t>(solve_.rows()); }
  /// Numerical rank of the standardised design before the ridge term.
  std::size_t rank() const { return rank_; }

 private:
  int d_;
  Vec mean_;
  Vec scale_;
  Mat design_;  // standardised basis rows
  Mat solve_;   // basis x points
  std::size_t rank_;
};

/// Step-(1) sample for one time step and class: design states and the
/// shared increments.
struct RegressionDesign {
  Mat states;      // d x N_x
  Mat increments;  // d x N_w
  std::vector<std::size_t> state_paths;      // omega of each design state
  std::vector<std::size_t> increment_paths;  // omega' of each increment
};

/// Draws the step-(1) subsamples (uniform with replacement, seeded by
/// (seed, t)) for class r at grid index t.
RegressionDesign draw_design(const SamplePaths& paths, std::size_t r, std::size_t t,
                             std::size_t n_x, std::size_t n_w, std::uint64_t seed);

struct RegressionOutput {
  std::vector<std::size_t> modes;
  std::vector<QuadraticForm> forms;  // one per mode in the class
  // Per form: Monte Carlo standard error of the one-step estimate at the
  // anchor state, combined with the regression residual variance.
  std::vector<double> stderr_proxy;
  double max_residual = 0.0;
};

/// Step (2b): one fitted form per mode of class r given the selection. The
/// stderr proxy is anchored at the mean design state.
RegressionOutput regress_G_image(const ProblemSpec& spec, const GeneratorChoice& generator,
                                 std::size_t r, const RegressionDesign& design,
                                 const std::vector<QuadraticForm>& Z_next,
                                 const std::vector<std::size_t>& selection, double h, int k,
                                 double ridge = 1e-8, bool normalize_weights = true);

struct SolveResult {
  MaxPlusValueFunction value;
  SamplePaths paths;
  int k = 0;
  double abar = 0.0;
  std::vector<StepDiagnostics> steps;  // in time order
  double simulate_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Largest tr(Sigma Sigma') over modes, from the constant factors when
/// available, otherwise scanned over every simulated state.
double max_abar(const ProblemSpec& spec, const GeneratorChoice& generator,
                const SamplePaths& paths);

/// Backward sweep over t = T - h, ..., 0 producing Z_t for every grid time.
SolveResult backward_solve(const ProblemSpec& spec, const GeneratorChoice& generator,
                           const SolverConfig& config, const std::vector<QuadraticForm>& terminal);

double value_eval(const MaxPlusValueFunction& vf, double t, const Vec& x);

}  // namespace mphjb
