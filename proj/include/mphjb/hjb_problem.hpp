#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mphjb/types.hpp"

namespace mphjb {

/// Coefficients of one discrete control branch m. Every callable takes the
/// state x and the continuum control u (an empty vector when the problem has
/// no continuum control).
struct ModeCoefficients {
  std::string name;
  std::function<Vec(const Vec& x, const Vec& u)> drift;
  std::function<Mat(const Vec& x, const Vec& u)> volatility;
  std::function<double(const Vec& x, const Vec& u)> discount;
  std::function<double(const Vec& x, const Vec& u)> reward;
};

/// u-structure of a linear-quadratic mode:
///   f(x,u) = f(x,0) + drift_gain u
///   l(x,u) = l(x,0) + u.(reward_cross x + reward_linear) + 1/2 u' reward_hessian u
/// with reward_hessian negative definite. Volatility and discount must not
/// depend on u.
struct LqModeStructure {
  Mat drift_gain;      // d x p
  Mat reward_hessian;  // p x p
  Mat reward_cross;    // p x d
  Vec reward_linear;   // p
};

struct LqControl {
  int control_dim = 0;
  std::vector<LqModeStructure> modes;
};

/// Controlled diffusion data over a finite mode set plus the terminal payoff.
class ProblemSpec {
 public:
  ProblemSpec(int dimension, double horizon, std::vector<ModeCoefficients> modes,
              std::function<double(const Vec&)> payoff,
              std::optional<LqControl> control = std::nullopt);

  int dimension() const { return dimension_; }
  double horizon() const { return horizon_; }
  std::size_t mode_count() const { return modes_.size(); }
  const ModeCoefficients& mode(std::size_t m) const { return modes_.at(m); }
  const std::vector<ModeCoefficients>& modes() const { return modes_; }
  double payoff(const Vec& x) const { return payoff_(x); }

  const std::optional<LqControl>& control() const { return control_; }
  int control_dim() const { return control_ ? control_->control_dim : 0; }
  /// u = 0 in the control space (empty for problems without continuum control).
  Vec zero_control() const { return Vec::Zero(control_dim()); }

  Vec drift(std::size_t m, const Vec& x, const Vec& u) const;
  Mat volatility(std::size_t m, const Vec& x, const Vec& u) const;
  double discount(std::size_t m, const Vec& x, const Vec& u) const;
  double reward(std::size_t m, const Vec& x, const Vec& u) const;

 private:
  int dimension_;
  double horizon_;
  std::vector<ModeCoefficients> modes_;
  std::function<double(const Vec&)> payoff_;
  std::optional<LqControl> control_;
};

/// Parameter z = (Q, b, c) of q(x, z) = 1/2 x'Qx + b.x + c.
class QuadraticForm {
 public:
  QuadraticForm() = default;
  /// Q must be symmetric to 1e-12 relative; the stored matrix is the exact
  /// symmetric part.
  QuadraticForm(Mat Q, Vec b, double c);

  static QuadraticForm constant(int dimension, double c);

  int dimension() const { return static_cast<int>(b_.size()); }
  const Mat& Q() const { return Q_; }
  const Vec& b() const { return b_; }
  double c() const { return c_; }

  bool operator==(const QuadraticForm& other) const;

 private:
  Mat Q_;
  Vec b_;
  double c_ = 0.0;
};

double eval_quad(const QuadraticForm& z, const Vec& x);

struct SupValue {
  double value;
  std::size_t index;
};

/// max over Z of q(x, z); ties go to the lowest index.
SupValue sup_eval(const std::vector<QuadraticForm>& Z, const Vec& x);

/// Time-indexed sets Z_t on the uniform grid {0, h, ..., T}.
class MaxPlusValueFunction {
 public:
  MaxPlusValueFunction(int dimension, double horizon, double h);

  int dimension() const { return dimension_; }
  double horizon() const { return horizon_; }
  double step() const { return h_; }
  /// Number of grid points, T/h + 1.
  std::size_t grid_size() const { return forms_.size(); }
  double time_at(std::size_t i) const { return static_cast<double>(i) * h_; }
  /// Grid index of t; throws UsageError when t is off the grid.
  std::size_t index_of(double t) const;

  const std::vector<QuadraticForm>& forms(std::size_t i) const { return forms_.at(i); }
  /// Per-form standard-error annotations (same length as forms(i), may be zero).
  const std::vector<double>& form_stderr(std::size_t i) const { return stderr_.at(i); }
  void set_forms(std::size_t i, std::vector<QuadraticForm> forms,
                 std::vector<double> stderr_per_form = {});

  SupValue evaluate(std::size_t i, const Vec& x) const;

  /// One JSON document: per time step the list of (Q row-major, b, c).
  std::string to_json() const;
  static MaxPlusValueFunction from_json(const std::string& text);

 private:
  int dimension_;
  double horizon_;
  double h_;
  std::vector<std::vector<QuadraticForm>> forms_;
  std::vector<std::vector<double>> stderr_;
};

/// Number of whole steps in [0, T]; throws ConfigurationError unless T/h is
/// an integer to 1e-9 relative.
std::size_t integral_step_count(double horizon, double h);

}  // namespace mphjb
