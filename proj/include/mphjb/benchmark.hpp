#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mphjb/factorization.hpp"
#include "mphjb/hjb_problem.hpp"
#include "mphjb/maxplus_solver.hpp"
#include "mphjb/payoff.hpp"

namespace mphjb {

/// Uncertain-correlation option benchmark. Correlation sets:
///   "uncertain": every sign pattern of +-rho on the correlated pairs
///   "fixed":     the single matrix with +rho on the correlated pairs
struct ExperimentConfig {
  int dimension = 2;
  Vec volatilities;
  double rho = 0.0;
  std::string correlation_mode = "uncertain";
  double k1 = -5.0;
  double k2 = 5.0;
  double horizon = 0.25;
  double h = 0.01;
  std::size_t n_in = 1000;
  std::size_t n_x = 10;
  std::size_t n_w = 1000;
  std::uint64_t seed = 1;
  std::optional<int> k;
  double ridge = 1e-8;
  bool normalize_weights = true;
  double epsilon = 0.05;
  double payoff_range = 1000.0;
  Vec x0;
  double initial_half_width_fraction = 0.99;  // box x0 (1 -+ fraction)
  double state_floor = 1e-6;
  // Slice: x = slice_base with coordinate `slice_sweep_index` set to
  // x[slice_reference_index] + offset, offsets evenly spaced. 1-based indices.
  Vec slice_base;
  int slice_sweep_index = 1;
  int slice_reference_index = 2;
  double slice_offset_min = -50.0;
  double slice_offset_max = 50.0;
  std::size_t slice_points = 101;
  std::string output_dir = "run";
  bool lower_bound = false;  // d = 5: also solve every (odd, even) pair in d = 2
  bool dump_value_function = false;
  bool dump_paths = false;
  int threads = 0;

  /// Defaults for the given dimension (volatilities, N_x, N_w, N_in, x0).
  static ExperimentConfig defaults(int dimension);
  /// Parses a JSON document; unknown keys are configuration errors.
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
  void validate() const;
};

/// Correlated pairs (0-based) of the shipped builders: {(0,1)} for d = 2,
/// {(0,1), (3,4)} for d = 5.
std::vector<std::pair<int, int>> correlated_pairs(int dimension);

/// Identity plus +-rho on each pair; all 2^pairs sign patterns, the first
/// pair's sign varying slowest, + before -.
std::vector<Mat> block_correlation_modes(int dimension,
                                         const std::vector<std::pair<int, int>>& pairs,
                                         double rho);

/// Shipped sets: d = 2 gives 2 modes, d = 5 gives 4.
std::vector<Mat> build_correlation_modes(int dimension, double rho);

/// d xi_i = s_i xi_i dB_i, d<B_i, B_j> = m_ij dt, payoff
/// call_spread(max over odd-indexed x - min over even-indexed x), no discount
/// or running reward.
ProblemSpec make_uncertain_correlation_problem(const Vec& volatilities,
                                               const std::vector<Mat>& correlations, double k1,
                                               double k2, double horizon);

/// Odd coordinates (1, 3, 5, ... 1-based) as 0-based indices.
std::vector<int> odd_coordinates(int dimension);
std::vector<int> even_coordinates(int dimension);

/// Terminal forms: lifted scalar approximation, exact duplicates removed.
std::vector<QuadraticForm> terminal_forms(const ExperimentConfig& config,
                                          ScalarPayoffApproximation* scalar = nullptr);

struct OracleResult {
  double value;
  int nodes;       // quadrature points of the converged rule
  double change;   // difference to the previous rule
};

/// E[call_spread(xi_1(T) - xi_2(T))] for the two-dimensional lognormal with
/// correlation m12, time to maturity tau. The inner coordinate is integrated
/// in closed form (conditional call prices); the outer one by a trapezoid rule
/// on [-12, 12] with the step halved until two successive values differ by
/// < tol. Throws NumericalError if 2^20 intervals do not reach tol.
OracleResult oracle_singleton_price(double m12, const Vec& volatilities, const Vec& x, double tau,
                                    double k1, double k2, double tol = 1e-6);

struct PairSolution {
  int i;  // 0-based odd coordinate
  int j;  // 0-based even coordinate
  MaxPlusValueFunction value;
};

struct LowerBound {
  double value;
  int i;
  int j;
};

/// max over pairs of value_eval(v_ij, t, (x_i, x_j)).
LowerBound lower_bound_dim5(const std::vector<PairSolution>& pairs, double t, const Vec& x);

/// Pair problems for the lower bound: volatilities (s_i, s_j) and +-rho when
/// (i, j) is one of the correlated pairs, independent otherwise.
ExperimentConfig pair_config(const ExperimentConfig& config, int i, int j);

struct SlicePoint {
  double offset;
  double value;
  double stderr_proxy;
};

struct ExperimentReport {
  ExperimentConfig config;
  SolveResult solve;
  std::vector<SlicePoint> slice;
  std::vector<SlicePoint> lower_bound;  // empty unless requested
  std::size_t terminal_form_count = 0;
  double payoff_gap = 0.0;
  double stability_tolerance = 0.0;
  std::size_t stability_violations = 0;
  std::size_t weight_negative = 0;
  double min_weight = 0.0;
  double seconds = 0.0;
};

/// Slice points of the config as d-vectors (columns).
Mat slice_points(const ExperimentConfig& config);

/// Solves, evaluates the t = 0 slice and counts stability violations.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// CSV (header t,x_sweep,value,stderr_proxy; 17 significant digits).
std::string slice_csv(const std::vector<SlicePoint>& slice, double t);
std::vector<SlicePoint> read_slice_csv(const std::string& path);

/// Writes slice.csv, summary.json and (when requested) lower_bound.csv,
/// value_function.json and paths.bin into config.output_dir.
void write_report(const ExperimentReport& report);

}  // namespace mphjb
