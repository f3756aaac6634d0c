#include "mphjb/simulation.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "mphjb/rng.hpp"

namespace mphjb {

InitialSampler InitialSampler::point(Vec x0) {
  const auto d = x0.size();
  return {std::move(x0), Vec::Zero(d)};
}

InitialSampler InitialSampler::uniform(Vec center, Vec half_width) {
  require_dim(half_width.size(), center.size(), "InitialSampler::uniform");
  if ((half_width.array() < 0.0).any()) {
    throw ConfigurationError("InitialSampler: half-width must be nonnegative");
  }
  return {std::move(center), std::move(half_width)};
}

Vec InitialSampler::draw(std::uint64_t seed, std::size_t omega) const {
  Vec x = center;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    if (half_width(c) == 0.0) continue;
    const double u = rng::uniform(seed, rng::kInitialState, omega, 0, static_cast<std::uint64_t>(c));
    x(c) += half_width(c) * (2.0 * u - 1.0);
  }
  return x;
}

SamplePaths::SamplePaths(std::uint64_t seed, int dimension, std::size_t n_in, std::size_t steps,
                         double h, std::size_t classes)
    : seed_(seed), dimension_(dimension), n_in_(n_in), steps_(steps), h_(h) {
  increments_.assign(steps, Mat::Zero(dimension, static_cast<Eigen::Index>(n_in)));
  states_.assign(classes,
                 std::vector<Mat>(steps + 1, Mat::Zero(dimension, static_cast<Eigen::Index>(n_in))));
}

Vec euler_step(const GeneratorChoice& generator, std::size_t r, const Vec& x, const Vec& dW,
               double h) {
  Vec y = x + generator.volatility(r, x) * dW;
  if (generator.retained.at(r).drift) y += generator.drift(r, x) * h;
  return y;
}

SamplePaths simulate(const GeneratorChoice& generator, double horizon, double h,
                     std::size_t n_in, std::uint64_t seed, const InitialSampler& sampler,
                     const SimulationOptions& options) {
  if (n_in == 0) throw ConfigurationError("simulate: N_in must be at least 1");
  const std::size_t steps = integral_step_count(horizon, h);
  const int d = sampler.dimension();
  const std::size_t classes = generator.class_count();
  SamplePaths paths(seed, d, n_in, steps, h, classes);
  const double sqrt_h = std::sqrt(h);
  const auto n = static_cast<std::int64_t>(n_in);

  std::size_t floored = 0;
#pragma omp parallel for schedule(static) reduction(+ : floored)
  for (std::int64_t w = 0; w < n; ++w) {
    const auto omega = static_cast<std::size_t>(w);
    const Vec x0 = sampler.draw(seed, omega);
    for (std::size_t r = 0; r < classes; ++r) paths.states_[r][0].col(w) = x0;
    for (std::size_t t = 0; t < steps; ++t) {
      Vec dW(d);
      for (int c = 0; c < d; ++c) {
        dW(c) = options.zero_increments
                    ? 0.0
                    : sqrt_h * rng::normal(seed, rng::kIncrements, t, omega, static_cast<std::uint64_t>(c));
      }
      paths.increments_[t].col(w) = dW;
      for (std::size_t r = 0; r < classes; ++r) {
        Vec y = euler_step(generator, r, paths.states_[r][t].col(w), dW, h);
        if (options.state_floor) {
          for (int c = 0; c < d; ++c) {
            if (y(c) < *options.state_floor) {
              y(c) = *options.state_floor;
              ++floored;
            }
          }
        }
        paths.states_[r][t + 1].col(w) = y;
      }
    }
  }
  paths.floored_ = floored;
  return paths;
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary dumps assume little-endian");

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_block(std::ofstream& out, const Mat& m) {
  // Column-major d x N storage is omega-major then coordinate.
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

void read_block(std::ifstream& in, Mat& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

}  // namespace

void SamplePaths::write_binary(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot open " + path + " for writing");
  write_u64(out, seed_);
  write_u64(out, static_cast<std::uint64_t>(dimension_));
  write_u64(out, n_in_);
  write_u64(out, steps_);
  out.write(reinterpret_cast<const char*>(&h_), sizeof h_);
  write_u64(out, states_.size());
  for (const auto& m : increments_) write_block(out, m);
  for (const auto& cls : states_)
    for (const auto& m : cls) write_block(out, m);
}

SamplePaths SamplePaths::read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot open " + path);
  const std::uint64_t seed = read_u64(in);
  const auto d = static_cast<int>(read_u64(in));
  const std::uint64_t n_in = read_u64(in);
  const std::uint64_t steps = read_u64(in);
  double h = 0.0;
  in.read(reinterpret_cast<char*>(&h), sizeof h);
  const std::uint64_t classes = read_u64(in);
  if (!in) throw ConfigurationError(path + ": truncated header");
  SamplePaths p(seed, d, n_in, steps, h, classes);
  for (auto& m : p.increments_) read_block(in, m);
  for (auto& cls : p.states_)
    for (auto& m : cls) read_block(in, m);
  if (!in) throw ConfigurationError(path + ": truncated payload");
  return p;
}

bool SamplePaths::operator==(const SamplePaths& other) const {
  return seed_ == other.seed_ && dimension_ == other.dimension_ && n_in_ == other.n_in_ &&
         steps_ == other.steps_ && h_ == other.h_ && increments_ == other.increments_ &&
         states_ == other.states_;
}

}  // namespace mphjb
