#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mphjb/factorization.hpp"

namespace mphjb {

/// Uniform law on the box center +- half_width; half_width = 0 is the point law.
struct InitialSampler {
  Vec center;
  Vec half_width;

  static InitialSampler point(Vec x0);
  static InitialSampler uniform(Vec center, Vec half_width);

  int dimension() const { return static_cast<int>(center.size()); }
  Vec draw(std::uint64_t seed, std::size_t omega) const;
};

struct SimulationOptions {
  /// Lower bound applied to every state coordinate after each Euler step
  /// (positivity of geometric dynamics). Not applied when unset.
  std::optional<double> state_floor;
  /// Test hook: all increments are exactly zero.
  bool zero_increments = false;
};

/// Seeded Brownian increments shared by every retained generator class and the
/// Euler states X^r(t, omega) of each class.
class SamplePaths {
 public:
  SamplePaths(std::uint64_t seed, int dimension, std::size_t n_in, std::size_t steps, double h,
              std::size_t classes);

  std::uint64_t seed() const { return seed_; }
  int dimension() const { return dimension_; }
  std::size_t path_count() const { return n_in_; }
  std::size_t step_count() const { return steps_; }
  double step() const { return h_; }
  std::size_t class_count() const { return states_.size(); }
  std::size_t floored_events() const { return floored_; }

  /// d x N_in block of increments W_{t+h} - W_t at step index t (0 <= t < steps).
  const Mat& increments(std::size_t t) const { return increments_.at(t); }
  /// d x N_in block of states of class r at grid index t (0 <= t <= steps).
  const Mat& states(std::size_t r, std::size_t t) const { return states_.at(r).at(t); }

  /// Little-endian binary dump. Header: seed, d, N_in, steps as uint64, then h
  /// (float64) and the class count (uint64). Payload:
  /// increments (t-major, then omega, then coordinate) followed by the states
  /// of each class in the same order over t = 0..steps.
  void write_binary(const std::string& path) const;
  static SamplePaths read_binary(const std::string& path);

  bool operator==(const SamplePaths& other) const;

 private:
  friend SamplePaths simulate(const GeneratorChoice&, double, double, std::size_t, std::uint64_t,
                              const InitialSampler&, const SimulationOptions&);

  std::uint64_t seed_;
  int dimension_;
  std::size_t n_in_;
  std::size_t steps_;
  double h_;
  std::size_t floored_ = 0;
  std::vector<Mat> increments_;
  std::vector<std::vector<Mat>> states_;
};

/// Euler scheme X(t+h) = X(t) + fbar(X) h + sbar(X) dW for every retained
/// class, all classes sharing X(0) and the increments. Increment coordinate c
/// of path omega at step t is sqrt(h) times a counter-based normal keyed by
/// (seed, t, omega, c).
SamplePaths simulate(const GeneratorChoice& generator, double horizon, double h,
                     std::size_t n_in, std::uint64_t seed, const InitialSampler& sampler,
                     const SimulationOptions& options = {});

/// S(x, W) = x + fbar(x) h + sbar(x) W for class r.
Vec euler_step(const GeneratorChoice& generator, std::size_t r, const Vec& x, const Vec& dW,
               double h);

}  // namespace mphjb
