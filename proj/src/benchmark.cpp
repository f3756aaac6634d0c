#include "mphjb/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>


namespace mphjb {

using nlohmann::json;

namespace {

Vec vec_from_json(const json& j, const char* key) {
  if (!j.is_array()) throw ConfigurationError(std::string(key) + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigurationError(std::string(key) + " must hold numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json vec_to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(int dimension) {
  ExperimentConfig c;
  c.dimension = dimension;
  if (dimension == 2) {
    c.volatilities = Vec(2);
    c.volatilities << 0.4, 0.3;
    c.n_in = 1000;
    c.n_x = 10;
    c.n_w = 1000;
  } else if (dimension == 5) {
    c.volatilities = Vec(5);
    c.volatilities << 0.4, 0.3, 0.2, 0.3, 0.4;
    c.n_in = 3000;
    c.n_x = 50;
    c.n_w = 1000;
  } else if (dimension >= 2) {
    c.volatilities = Vec::Constant(dimension, 0.3);
    c.n_x = 2 * quadratic_basis_size(dimension);
  }
  if (dimension >= 1) {
    c.x0 = Vec::Constant(dimension, 50.0);
    c.slice_base = c.x0;
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigurationError("config must be a JSON object");
  const int d = j.contains("dimension") ? j.at("dimension").get<int>() : 2;
  ExperimentConfig c = defaults(d);
  bool base_given = false;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "dimension") {
        continue;
      } else if (key == "volatilities") {
        c.volatilities = vec_from_json(value, "volatilities");
      } else if (key == "rho") {
        c.rho = value.get<double>();
      } else if (key == "correlation_mode") {
        c.correlation_mode = value.get<std::string>();
      } else if (key == "k1") {
        c.k1 = value.get<double>();
      } else if (key == "k2") {
        c.k2 = value.get<double>();
      } else if (key == "horizon") {
        c.horizon = value.get<double>();
      } else if (key == "h") {
        c.h = value.get<double>();
      } else if (key == "n_in") {
        c.n_in = value.get<std::size_t>();
      } else if (key == "n_x") {
        c.n_x = value.get<std::size_t>();
      } else if (key == "n_w") {
        c.n_w = value.get<std::size_t>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "k") {
        if (value.is_null() || (value.is_string() && value.get<std::string>() == "auto")) {
          c.k.reset();
        } else {
          c.k = value.get<int>();
        }
      } else if (key == "ridge") {
        c.ridge = value.get<double>();
      } else if (key == "normalize_weights") {
        c.normalize_weights = value.get<bool>();
      } else if (key == "epsilon") {
        c.epsilon = value.get<double>();
      } else if (key == "payoff_range") {
        c.payoff_range = value.get<double>();
      } else if (key == "x0") {
        c.x0 = vec_from_json(value, "x0");
      } else if (key == "initial_half_width_fraction") {
        c.initial_half_width_fraction = value.get<double>();
      } else if (key == "state_floor") {
        c.state_floor = value.get<double>();
      } else if (key == "slice_base") {
        c.slice_base = vec_from_json(value, "slice_base");
        base_given = true;
      } else if (key == "slice_sweep_index") {
        c.slice_sweep_index = value.get<int>();
      } else if (key == "slice_reference_index") {
        c.slice_reference_index = value.get<int>();
      } else if (key == "slice_offset_min") {
        c.slice_offset_min = value.get<double>();
      } else if (key == "slice_offset_max") {
        c.slice_offset_max = value.get<double>();
      } else if (key == "slice_points") {
        c.slice_points = value.get<std::size_t>();
      } else if (key == "output_dir") {
        c.output_dir = value.get<std::string>();
      } else if (key == "lower_bound") {
        c.lower_bound = value.get<bool>();
      } else if (key == "dump_value_function") {
        c.dump_value_function = value.get<bool>();
      } else if (key == "dump_paths") {
        c.dump_paths = value.get<bool>();
      } else if (key == "threads") {
        c.threads = value.get<int>();
      } else {
        throw ConfigurationError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("config value has the wrong type: ") + e.what());
  }
  if (!base_given) c.slice_base = c.x0;
  c.validate();
  return c;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["dimension"] = dimension;
  j["volatilities"] = vec_to_json(volatilities);
  j["rho"] = rho;
  j["correlation_mode"] = correlation_mode;
  j["k1"] = k1;
  j["k2"] = k2;
  j["horizon"] = horizon;
  j["h"] = h;
  j["n_in"] = n_in;
  j["n_x"] = n_x;
  j["n_w"] = n_w;
  j["seed"] = seed;
  j["k"] = k ? json(*k) : json("auto");
  j["ridge"] = ridge;
  j["normalize_weights"] = normalize_weights;
  j["epsilon"] = epsilon;
  j["payoff_range"] = payoff_range;
  j["x0"] = vec_to_json(x0);
  j["initial_half_width_fraction"] = initial_half_width_fraction;
  j["state_floor"] = state_floor;
  j["slice_base"] = vec_to_json(slice_base);
  j["slice_sweep_index"] = slice_sweep_index;
  j["slice_reference_index"] = slice_reference_index;
  j["slice_offset_min"] = slice_offset_min;
  j["slice_offset_max"] = slice_offset_max;
  j["slice_points"] = slice_points;
  j["output_dir"] = output_dir;
  j["lower_bound"] = lower_bound;
  j["dump_value_function"] = dump_value_function;
  j["dump_paths"] = dump_paths;
  j["threads"] = threads;
  return j.dump(2);
}

void ExperimentConfig::validate() const {
  if (dimension < 2) throw ConfigurationError("dimension must be at least 2");
  require_dim(volatilities.size(), dimension, "volatilities");
  require_dim(x0.size(), dimension, "x0");
  require_dim(slice_base.size(), dimension, "slice_base");
  if ((volatilities.array() < 0.0).any()) throw ConfigurationError("volatilities must be nonnegative");
  if ((x0.array() <= 0.0).any()) throw ConfigurationError("x0 must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigurationError("rho must lie in [0, 1)");
  if (correlation_mode != "uncertain" && correlation_mode != "fixed") {
    throw ConfigurationError("correlation_mode must be 'uncertain' or 'fixed'");
  }
  if (!(k1 < k2)) throw ConfigurationError("need k1 < k2");
  if (!(horizon > 0.0) || !(h > 0.0)) throw ConfigurationError("horizon and h must be positive");
  integral_step_count(horizon, h);
  if (!(initial_half_width_fraction >= 0.0 && initial_half_width_fraction < 1.0)) {
    throw ConfigurationError("initial_half_width_fraction must lie in [0, 1)");
  }
  auto in_range = [&](int i) { return i >= 1 && i <= dimension; };
  if (!in_range(slice_sweep_index) || !in_range(slice_reference_index) ||
      slice_sweep_index == slice_reference_index) {
    throw ConfigurationError("slice indices must be distinct coordinates in 1..dimension");
  }
  if (slice_points == 0) throw ConfigurationError("slice_points must be positive");
  if (slice_offset_max < slice_offset_min) throw ConfigurationError("empty slice range");
  if (lower_bound && dimension != 5) throw ConfigurationError("lower_bound needs dimension 5");
}

std::vector<std::pair<int, int>> correlated_pairs(int dimension) {
  if (dimension == 2) return {{0, 1}};
  if (dimension == 5) return {{0, 1}, {3, 4}};
  throw ConfigurationError("no shipped correlation builder for dimension " +
                           std::to_string(dimension));
}

std::vector<Mat> block_correlation_modes(int dimension,
                                         const std::vector<std::pair<int, int>>& pairs,
                                         double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigurationError("rho must lie in [0, 1)");
  for (const auto& [a, b] : pairs) {
    if (a < 0 || b < 0 || a >= dimension || b >= dimension || a == b) {
      throw ConfigurationError("correlated pair out of range");
    }
  }
  const std::size_t count = std::size_t{1} << pairs.size();
  std::vector<Mat> out;
  for (std::size_t pattern = 0; pattern < count; ++pattern) {
    Mat m = Mat::Identity(dimension, dimension);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const bool negative = (pattern >> (pairs.size() - 1 - p)) & 1U;
      const double v = negative ? -rho : rho;
      m(pairs[p].first, pairs[p].second) = v;
      m(pairs[p].second, pairs[p].first) = v;
    }
    validate_correlation(m);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Mat> build_correlation_modes(int dimension, double rho) {
  return block_correlation_modes(dimension, correlated_pairs(dimension), rho);
}

std::vector<int> odd_coordinates(int dimension) {
  std::vector<int> out;
  for (int i = 0; i < dimension; i += 2) out.push_back(i);
  return out;
}

std::vector<int> even_coordinates(int dimension) {
  std::vector<int> out;
  for (int i = 1; i < dimension; i += 2) out.push_back(i);
  return out;
}

ProblemSpec make_uncertain_correlation_problem(const Vec& volatilities,
                                               const std::vector<Mat>& correlations, double k1,
                                               double k2, double horizon) {
  const int d = static_cast<int>(volatilities.size());
  std::vector<ModeCoefficients> modes;
  for (std::size_t m = 0; m < correlations.size(); ++m) {
    require_dim(correlations[m].rows(), d, "correlation mode");
    validate_correlation(correlations[m]);
    Eigen::LLT<Mat> llt(correlations[m]);
    if (llt.info() != Eigen::Success) throw ConfigurationError("correlation mode is singular");
    const Mat root = llt.matrixL();
    ModeCoefficients mc;
    mc.name = "corr" + std::to_string(m);
    mc.volatility = [volatilities, root](const Vec& x, const Vec&) -> Mat {
      return volatilities.cwiseProduct(x).asDiagonal() * root;
    };
    modes.push_back(std::move(mc));
  }
  const std::vector<int> I = odd_coordinates(d);
  const std::vector<int> J = even_coordinates(d);
  auto payoff = [I, J, k1, k2](const Vec& x) { return max_min_spread_payoff(x, I, J, k1, k2); };
  return ProblemSpec(d, horizon, std::move(modes), payoff);
}

namespace {

std::vector<Mat> config_correlations(const ExperimentConfig& c) {
  std::vector<Mat> modes = build_correlation_modes(c.dimension, c.rho);
  if (c.correlation_mode == "fixed") modes.resize(1);
  return modes;
}

}  // namespace

std::vector<QuadraticForm> terminal_forms(const ExperimentConfig& config,
                                          ScalarPayoffApproximation* scalar) {
  ScalarPayoffOptions o;
  o.K1 = config.k1;
  o.K2 = config.k2;
  o.range = config.payoff_range;
  o.epsilon = config.epsilon;
  ScalarPayoffApproximation approx = approximate_scalar_payoff(o);
  const auto lifted = lift_payoff(approx.forms, odd_coordinates(config.dimension),
                                  even_coordinates(config.dimension), config.dimension);
  std::vector<QuadraticForm> out;
  for (const auto& z : lifted)
    if (std::find(out.begin(), out.end(), z) == out.end()) out.push_back(z);
  if (scalar) *scalar = std::move(approx);
  return out;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// E[(Y - K)^+] for lognormal Y with mean F and log-sd s.
double lognormal_call(double F, double K, double s) {
  if (K <= 0.0) return F - K;
  if (s <= 0.0) return std::max(F - K, 0.0);
  const double d1 = (std::log(F / K) + 0.5 * s * s) / s;
  return F * normal_cdf(d1) - K * normal_cdf(d1 - s);
}

}  // namespace

OracleResult oracle_singleton_price(double m12, const Vec& volatilities, const Vec& x, double tau,
                                    double k1, double k2, double tol) {
  require_dim(volatilities.size(), 2, "oracle volatilities");
  require_dim(x.size(), 2, "oracle state");
  if (!(tau >= 0.0)) throw UsageError("oracle: time to maturity must be nonnegative");
  if (!(std::abs(m12) <= 1.0)) throw ConfigurationError("oracle: |m12| must not exceed 1");
  const double s1 = volatilities(0) * std::sqrt(tau);
  const double s2 = volatilities(1) * std::sqrt(tau);
  const double cond_sd = s1 * std::sqrt(std::max(0.0, 1.0 - m12 * m12));

  // Conditional on the second Gaussian z, xi_1 is lognormal.
  auto integrand = [&](double z) {
    const double xi2 = x(1) * std::exp(-0.5 * s2 * s2 + s2 * z);
    const double F = x(0) * std::exp(-0.5 * s1 * s1 + s1 * m12 * z + 0.5 * cond_sd * cond_sd);
    return lognormal_call(F, k1 + xi2, cond_sd) - lognormal_call(F, k2 + xi2, cond_sd);
  };
  if (s2 == 0.0 || (s1 == 0.0 && s2 == 0.0)) return {integrand(0.0), 1, 0.0};

  // Trapezoid rule on [-L, L] against the normal density, halving the step
  // until two successive sums agree. Converges geometrically for this
  // analytic integrand; the truncated tails weigh below 1e-30.
  constexpr double L = 12.0;
  constexpr int kMaxIntervals = 1 << 20;
  auto weighted = [&](double z) { return std::exp(-0.5 * z * z) * integrand(z); };
  int intervals = 64;
  double step = 2.0 * L / intervals;
  double sum = 0.5 * (weighted(-L) + weighted(L));
  for (int i = 1; i < intervals; ++i) sum += weighted(-L + i * step);
  double prev = sum * step / std::sqrt(2.0 * std::numbers::pi);
  while (intervals < kMaxIntervals) {
    // New midpoints only.
    for (int i = 0; i < intervals; ++i) sum += weighted(-L + (i + 0.5) * step);
    intervals *= 2;
    step *= 0.5;
    const double value = sum * step / std::sqrt(2.0 * std::numbers::pi);
    if (std::abs(value - prev) < tol) return {value, intervals + 1, std::abs(value - prev)};
    prev = value;
  }
  throw NumericalError("oracle: quadrature did not converge within 2^20 intervals");
}

LowerBound lower_bound_dim5(const std::vector<PairSolution>& pairs, double t, const Vec& x) {
  if (pairs.empty()) throw UsageError("lower bound: no pair solutions");
  LowerBound best{-std::numeric_limits<double>::infinity(), -1, -1};
  for (const auto& p : pairs) {
    if (p.i < 0 || p.j < 0 || p.i >= x.size() || p.j >= x.size()) {
      throw UsageError("lower bound: pair index out of range");
    }
    Vec xy(2);
    xy << x(p.i), x(p.j);
    const double v = value_eval(p.value, t, xy);
    if (v > best.value) best = {v, p.i, p.j};
  }
  return best;
}

ExperimentConfig pair_config(const ExperimentConfig& config, int i, int j) {
  ExperimentConfig c = ExperimentConfig::defaults(2);
  c.volatilities << config.volatilities(i), config.volatilities(j);
  bool correlated = false;
  for (const auto& [a, b] : correlated_pairs(config.dimension))
    if ((a == i && b == j) || (a == j && b == i)) correlated = true;
  c.rho = correlated ? config.rho : 0.0;
  c.correlation_mode = correlated ? config.correlation_mode : "fixed";
  c.k1 = config.k1;
  c.k2 = config.k2;
  c.horizon = config.horizon;
  c.h = config.h;
  c.n_in = config.n_in;
  c.n_w = config.n_w;
  c.seed = config.seed;
  c.ridge = config.ridge;
  c.normalize_weights = config.normalize_weights;
  c.epsilon = config.epsilon;
  c.payoff_range = config.payoff_range;
  c.x0 << config.x0(i), config.x0(j);
  c.slice_base = c.x0;
  c.initial_half_width_fraction = config.initial_half_width_fraction;
  c.state_floor = config.state_floor;
  c.threads = config.threads;
  return c;
}

Mat slice_points(const ExperimentConfig& c) {
  const auto n = static_cast<Eigen::Index>(c.slice_points);
  Mat pts(c.dimension, n);
  const int s = c.slice_sweep_index - 1;
  const int ref = c.slice_reference_index - 1;
  for (Eigen::Index p = 0; p < n; ++p) {
    const double offset =
        n == 1 ? c.slice_offset_min
               : c.slice_offset_min + (c.slice_offset_max - c.slice_offset_min) *
                                          static_cast<double>(p) / static_cast<double>(n - 1);
    Vec x = c.slice_base;
    x(s) = x(ref) + offset;
    pts.col(p) = x;
  }
  return pts;
}

namespace {

SolveResult solve_config(const ExperimentConfig& c, std::size_t* terminal_count,
                         double* payoff_gap) {
  const std::vector<Mat> corr = config_correlations(c);
  const ProblemSpec spec = make_uncertain_correlation_problem(c.volatilities, corr, c.k1, c.k2, c.horizon);
  const GeneratorChoice gen = build_uncertain_correlation_generator(c.volatilities, corr);
  ScalarPayoffApproximation scalar;
  const std::vector<QuadraticForm> terminal = terminal_forms(c, &scalar);
  if (terminal_count) *terminal_count = terminal.size();
  if (payoff_gap) *payoff_gap = scalar.achieved_gap;

  SolverConfig s;
  s.h = c.h;
  s.k = c.k;
  s.n_in = c.n_in;
  s.n_x = c.n_x;
  s.n_w = c.n_w;
  s.seed = c.seed;
  s.ridge = c.ridge;
  s.normalize_weights = c.normalize_weights;
  s.sampler = InitialSampler::uniform(c.x0, c.x0 * c.initial_half_width_fraction);
  s.state_floor = c.state_floor;
  s.threads = c.threads;
  return backward_solve(spec, gen, s, terminal);
}

std::vector<SlicePoint> evaluate_slice(const ExperimentConfig& c, const MaxPlusValueFunction& vf) {
  const Mat pts = slice_points(c);
  std::vector<SlicePoint> out;
  const int s = c.slice_sweep_index - 1;
  const int ref = c.slice_reference_index - 1;
  for (Eigen::Index p = 0; p < pts.cols(); ++p) {
    const SupValue v = vf.evaluate(0, pts.col(p));
    out.push_back({pts(s, p) - pts(ref, p), v.value, vf.form_stderr(0).at(v.index)});
  }
  return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  std::size_t terminal_count = 0;
  double payoff_gap = 0.0;
  ExperimentReport rep{.config = config,
                       .solve = solve_config(config, &terminal_count, &payoff_gap),
                       .slice = {},
                       .lower_bound = {}};
  rep.terminal_form_count = terminal_count;
  rep.payoff_gap = payoff_gap;
  const SolveResult& sol = rep.solve;
  rep.slice = evaluate_slice(config, sol.value);

  double max_se = 0.0;
  rep.min_weight = std::numeric_limits<double>::infinity();
  for (const auto& st : sol.steps) {
    max_se = std::max(max_se, st.max_stderr);
    rep.weight_negative += st.negative_weights;
    rep.min_weight = std::min(rep.min_weight, st.min_weight);
  }
  rep.stability_tolerance = 10.0 * max_se;
  const double top = config.k2 - config.k1;
  for (std::size_t t = 0; t < sol.value.grid_size(); ++t) {
    for (std::size_t r = 0; r < sol.paths.class_count(); ++r) {
      const Vec v = sup_values(sol.value.forms(t), sol.paths.states(r, t));
      for (Eigen::Index w = 0; w < v.size(); ++w) {
        if (v(w) < -rep.stability_tolerance || v(w) > top + rep.stability_tolerance) {
          ++rep.stability_violations;
        }
      }
    }
  }

  if (config.lower_bound) {
    std::vector<PairSolution> pairs;
    for (int i : odd_coordinates(config.dimension)) {
      for (int j : even_coordinates(config.dimension)) {
        const ExperimentConfig pc = pair_config(config, i, j);
        pairs.push_back({i, j, solve_config(pc, nullptr, nullptr).value});
      }
    }
    const Mat pts = slice_points(config);
    const int s = config.slice_sweep_index - 1;
    const int ref = config.slice_reference_index - 1;
    for (Eigen::Index p = 0; p < pts.cols(); ++p) {
      const LowerBound lb = lower_bound_dim5(pairs, 0.0, pts.col(p));
      double se = 0.0;
      for (const auto& pr : pairs) {
        if (pr.i != lb.i || pr.j != lb.j) continue;
        Vec xy(2);
        xy << pts(pr.i, p), pts(pr.j, p);
        se = pr.value.form_stderr(0).at(pr.value.evaluate(0, xy).index);
      }
      rep.lower_bound.push_back({pts(s, p) - pts(ref, p), lb.value, se});
    }
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::string slice_csv(const std::vector<SlicePoint>& slice, double t) {
  std::string out = "t,x_sweep,value,stderr_proxy\n";
  char buf[128];
  for (const auto& p : slice) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", t, p.offset, p.value, p.stderr_proxy);
    out += buf;
  }
  return out;
}

std::vector<SlicePoint> read_slice_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("t,x_sweep,value,stderr_proxy", 0) != 0) {
    throw ConfigurationError(path + ": unexpected CSV header");
  }
  std::vector<SlicePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 4) throw ConfigurationError(path + ": malformed row '" + line + "'");
    out.push_back({v[1], v[2], v[3]});
  }
  return out;
}

void write_report(const ExperimentReport& rep) {
  namespace fs = std::filesystem;
  const fs::path dir(rep.config.output_dir);
  fs::create_directories(dir);
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigurationError("cannot write " + p.string());
    out << text;
  };
  write(dir / "slice.csv", slice_csv(rep.slice, 0.0));
  if (!rep.lower_bound.empty()) write(dir / "lower_bound.csv", slice_csv(rep.lower_bound, 0.0));

  const SolveResult& sol = rep.solve;
  json s;
  s["parameters"] = json::parse(rep.config.to_json());
  s["k"] = sol.k;
  s["abar"] = sol.abar;
  s["terminal_forms"] = rep.terminal_form_count;
  s["payoff_gap"] = rep.payoff_gap;
  s["weight_negative_count"] = rep.weight_negative;
  s["min_weight"] = rep.min_weight;
  s["stability_tolerance"] = rep.stability_tolerance;
  s["stability_violations"] = rep.stability_violations;
  s["floored_events"] = sol.paths.floored_events();
  json timing;
  timing["simulate_seconds"] = sol.simulate_seconds;
  timing["solve_seconds"] = sol.total_seconds;
  timing["total_seconds"] = rep.seconds;
  double select = 0.0;
  for (const auto& st : sol.steps) select += st.select_seconds;
  timing["select_seconds"] = select;
  s["timings"] = timing;
  json steps = json::array();
  for (const auto& st : sol.steps) {
    steps.push_back({{"t", st.t},
                     {"forms", st.forms},
                     {"candidates", st.candidates},
                     {"min_weight", st.min_weight},
                     {"negative_weights", st.negative_weights},
                     {"max_residual", st.max_residual},
                     {"max_stderr", st.max_stderr},
                     {"rank_deficient", st.rank_deficient},
                     {"wall_seconds", st.wall_seconds},
                     {"select_seconds", st.select_seconds}});
  }
  s["steps"] = steps;
  write(dir / "summary.json", s.dump(2) + "\n");
  if (rep.config.dump_value_function) write(dir / "value_function.json", sol.value.to_json());
  if (rep.config.dump_paths) sol.paths.write_binary((dir / "paths.bin").string());
}

}  // namespace mphjb
