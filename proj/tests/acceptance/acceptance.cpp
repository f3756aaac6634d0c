// Acceptance checks: one PASS/FAIL line per criterion. Arguments restrict the
// run to the given criterion numbers.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "mphjb/benchmark.hpp"
#include "mphjb/quadrature.hpp"
#include "mphjb/scheme_ops.hpp"

using namespace mphjb;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Mat random_matrix(std::mt19937_64& g, int rows, int cols) {
  std::normal_distribution<double> n;
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(g);
  return m;
}

ExperimentConfig slice_run(const std::string& mode, double rho, std::size_t n_in) {
  ExperimentConfig c = ExperimentConfig::defaults(2);
  c.correlation_mode = mode;
  c.rho = rho;
  c.n_in = n_in;
  c.output_dir = (std::filesystem::temp_directory_path() / "mphjb_acceptance").string();
  return c;
}

// The d = 2 slice runs are shared by several criteria.
struct SliceRuns {
  std::map<std::string, ExperimentReport> cache;
  const ExperimentReport& get(const std::string& key, const ExperimentConfig& c) {
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, run_experiment(c)).first;
    return it->second;
  }
  const ExperimentReport& fixed(std::size_t n_in) {
    return get("fixed" + std::to_string(n_in), slice_run("fixed", 0.0, n_in));
  }
  const ExperimentReport& uncertain(double rho) {
    return get("uncertain" + std::to_string(rho), slice_run("uncertain", rho, 2000));
  }
};

SliceRuns runs;

double max_stderr(const std::vector<SlicePoint>& s) {
  double m = 0.0;
  for (const auto& p : s) m = std::max(m, p.stderr_proxy);
  return m;
}

struct Gap {
  double max_gap;
  double at;
};

Gap oracle_gap(const ExperimentReport& r) {
  const Mat pts = slice_points(r.config);
  Gap g{0.0, 0.0};
  for (Eigen::Index p = 0; p < pts.cols(); ++p) {
    const double o = oracle_singleton_price(0.0, r.config.volatilities, pts.col(p), r.config.horizon,
                                            r.config.k1, r.config.k2)
                         .value;
    const double gap = std::abs(r.slice[static_cast<std::size_t>(p)].value - o);
    if (gap > g.max_gap) g = {gap, r.slice[static_cast<std::size_t>(p)].offset};
  }
  return g;
}

Outcome zero_mean_weight() {
  std::mt19937_64 g(2024);
  int worst_case = -1;
  double worst = 0.0;
  bool ok = true;
  for (int i = 0; i < 20; ++i) {
    const int d = 1 + i % 5;
    const int ell = 1 + static_cast<int>(g() % static_cast<unsigned>(d));
    const int k = i % 4;
    const MonotonePolynomial p = MonotonePolynomial::build(random_matrix(g, d, ell), k);
    const WeightProbe w = probe_weights(p, Vec::Zero(d), Mat::Identity(d, d), 0.0, 0.01, 1000000,
                                        100 + static_cast<std::uint64_t>(i));
    const double z = std::abs(w.mean_P) / w.stderr_P;
    if (z > worst) {
      worst = z;
      worst_case = i;
    }
    if (!(z <= 4.0)) ok = false;
  }
  return {ok, fmt("worst |mean P| / stderr = %.3f (case %d), bound 4", worst, worst_case)};
}

Outcome ftw_reduction() {
  std::mt19937_64 g(7);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int d = 1 + i % 5;
    const int ell = 1 + i % d;
    const Mat S = random_matrix(g, d, ell);
    const Vec w = random_matrix(g, d, 1).col(0);
    const MonotonePolynomial p = MonotonePolynomial::build(S, 0);
    const double expect = 0.5 * ((S * S.transpose()) * (w * w.transpose() - Mat::Identity(d, d))).trace();
    worst = std::max(worst, std::abs(eval_P(p, w) - expect) / std::max(1.0, std::abs(expect)));
  }
  return {worst <= 1e-12, fmt("max relative difference %.3g over 1000 cases", worst)};
}

Outcome k_selection() {
  const Vec sig = (Vec(2) << 0.4, 0.3).finished();
  std::string detail;
  bool ok = true;
  for (const auto& [rho, want] : std::vector<std::pair<double, int>>{{0.0, 0}, {0.4, 0}, {0.8, 2}}) {
    const GeneratorChoice gen = build_uncertain_correlation_generator(sig, build_correlation_modes(2, rho));
    double abar = 0.0;
    for (const auto& f : *gen.constant_factors) abar = std::max(abar, f.abar);
    const int k = min_k_for_monotonicity(abar);
    ok = ok && k == want;
    detail += fmt("rho=%.1f abar=%.4g k=%d; ", rho, abar, k);
  }
  return {ok, detail};
}

Outcome weights_nonnegative() {
  const ExperimentReport& r = runs.uncertain(0.8);
  std::size_t weights = 0;
  for (const auto& st : r.solve.steps) weights += st.candidates;
  return {r.solve.k == 2 && r.weight_negative == 0 && r.min_weight >= 0.0,
          fmt("k=%d negative=%zu min_weight=%.4g over %zu steps", r.solve.k, r.weight_negative,
              r.min_weight, r.solve.steps.size())};
}

Outcome fd_equivalence() {
  const double h = 0.01;
  double worst = 0.0;
  bool consistent_ok = true;
  auto phi1 = [](const Vec& y) { return std::exp(y(0)) - 3.0 * y(0) * y(0); };
  for (int k = 0; k <= 3; ++k) {
    const double nu_c = std::sqrt(4.0 * k + 3.0);
    for (double nu : {1.5, nu_c, 4.0}) {
      for (double A11 : {1.0, 1.7, 2.9}) {
        ModeCoefficients m;
        m.name = "1d";
        m.volatility = [A11](const Vec&, const Vec&) { return Mat::Constant(1, 1, std::sqrt(A11)); };
        const ProblemSpec spec(1, 1.0, {m}, [](const Vec&) { return 0.0; });
        Generator g;
        g.volatility = [](const Vec&) { return Mat::Identity(1, 1); };
        const GeneratorChoice gen = single_class_generator(g, 1);
        const IncrementSample law = three_point_increments(1, nu, h);
        const SchemeContext ctx{spec, gen, k, law};
        const Stencil1d s = discrete_increment_operator_1d(A11, k, nu);
        const double x = 0.4;
        const double dx = std::sqrt(h) * nu;
        const double stencil = s.center * phi1(Vec::Constant(1, x)) + s.plus * phi1(Vec::Constant(1, x + dx)) +
                               s.minus * phi1(Vec::Constant(1, x - dx));
        worst = std::max(worst, std::abs(apply_T(ctx, phi1, Vec::Constant(1, x)) - stencil));
        if (nu == nu_c && !(s.consistent && std::abs(s.b - A11) <= 1e-12)) consistent_ok = false;
        if (nu != nu_c && A11 != 1.0 && s.consistent) consistent_ok = false;
      }
    }
  }
  std::mt19937_64 g(9);
  double worst2 = 0.0;
  double worst_sum = 0.0;
  auto phi2 = [](const Vec& y) { return std::sin(3.0 * y(0)) + y(0) * y(1) + std::exp(y(1)); };
  for (int i = 0; i < 50; ++i) {
    const Mat B = 0.5 * random_matrix(g, 2, 2);
    const Mat A = Mat::Identity(2, 2) + B * B.transpose();
    const Stencil2d s = discrete_increment_weights_2d(A);
    worst_sum = std::max(worst_sum, std::abs(s.sum() - 1.0));
    const Mat L = A.llt().matrixL();
    ModeCoefficients m;
    m.name = "2d";
    m.volatility = [L](const Vec&, const Vec&) { return L; };
    const ProblemSpec spec(2, 1.0, {m}, [](const Vec&) { return 0.0; });
    Generator gg;
    gg.volatility = [](const Vec&) { return Mat::Identity(2, 2); };
    const GeneratorChoice gen = single_class_generator(gg, 1);
    const IncrementSample law = three_point_increments(2, std::sqrt(3.0), h);
    const SchemeContext ctx{spec, gen, 0, law};
    const Vec x = random_matrix(g, 2, 1).col(0);
    const double dx = std::sqrt(3.0 * h);
    double expect = 0.0;
    for (int e1 = -1; e1 <= 1; ++e1)
      for (int e2 = -1; e2 <= 1; ++e2) expect += s.weight[e1 + 1][e2 + 1] * phi2(x + dx * (Vec(2) << e1, e2).finished());
    worst2 = std::max(worst2, std::abs(apply_T(ctx, phi2, x) - expect));
  }
  const bool ok = worst <= 1e-12 && worst2 <= 1e-12 && worst_sum <= 1e-12 && consistent_ok;
  return {ok, fmt("1D max diff %.3g, 2D max diff %.3g, max |sum - 1| %.3g, consistency flags %s", worst,
                  worst2, worst_sum, consistent_ok ? "ok" : "wrong")};
}

Outcome consistency_order() {
  // v(t, x) = e^t q(x) against the d = 2, rho = 0.8 uncertain-correlation
  // scheme (k = 2) with tensor Gauss-Hermite increments.
  const Vec sig = (Vec(2) << 0.4, 0.3).finished();
  const auto corr = build_correlation_modes(2, 0.8);
  const ProblemSpec spec = make_uncertain_correlation_problem(sig, corr, -5, 5, 0.25);
  const GeneratorChoice gen = build_uncertain_correlation_generator(sig, corr);
  const Mat Q = (Mat(2, 2) << 0.02, -0.015, -0.015, 0.03).finished();
  const QuadraticForm q(Q, (Vec(2) << 0.1, -0.2).finished(), 1.0);
  const double t = 0.1;
  const std::vector<Vec> xs{(Vec(2) << 50, 50).finished(), (Vec(2) << 30, 60).finished(),
                            (Vec(2) << 70, 40).finished()};
  auto hamiltonian = [&](const Vec& x, const Mat& D2) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < spec.mode_count(); ++m) {
      const Mat s = spec.volatility(m, x, spec.zero_control());
      best = std::max(best, 0.5 * (s * s.transpose() * D2).trace());
    }
    return best;
  };
  std::vector<double> residual;
  for (double h : {1e-2, 5e-3, 2.5e-3}) {
    const IncrementSample law = gaussian_quadrature_increments(2, 10, h);
    const SchemeContext ctx{spec, gen, 2, law};
    double r = 0.0;
    for (const Vec& x : xs) {
      const double next = apply_T(ctx, [&](const Vec& y) { return std::exp(t + h) * eval_quad(q, y); }, x);
      const double v = std::exp(t) * eval_quad(q, x);
      const double pde = v + hamiltonian(x, std::exp(t) * Q);
      r = std::max(r, std::abs((next - v) / h - pde));
    }
    residual.push_back(r);
  }
  const double o1 = std::log2(residual[0] / residual[1]);
  const double o2 = std::log2(residual[1] / residual[2]);
  return {o1 >= 0.9 && o2 >= 0.9,
          fmt("residuals %.4g %.4g %.4g, observed orders %.3f %.3f", residual[0], residual[1],
              residual[2], o1, o2)};
}

Outcome oracle_equivalence() {
  const ExperimentReport& r1 = runs.fixed(1000);
  const ExperimentReport& r2 = runs.fixed(2000);
  const Gap g1 = oracle_gap(r1);
  const Gap g2 = oracle_gap(r2);
  const double se = max_stderr(r2.slice);
  const double bound = std::max(0.3, 4.0 * se);
  return {g2.max_gap <= bound && g2.max_gap < g1.max_gap,
          fmt("N_in=2000 max gap %.4f at x1-x2=%g (bound %.4f, stderr %.4g, %.1fs); N_in=1000 max gap %.4f",
              g2.max_gap, g2.at, bound, se, r2.seconds, g1.max_gap)};
}

Outcome rho_monotonicity() {
  const ExperimentReport& r0 = runs.fixed(2000);
  const ExperimentReport& r4 = runs.uncertain(0.4);
  const ExperimentReport& r8 = runs.uncertain(0.8);
  const double tol = 10.0 * std::max({max_stderr(r0.slice), max_stderr(r4.slice), max_stderr(r8.slice)});
  std::size_t order = 0;
  std::size_t strict = 0;  // ordering without tolerance, reported only
  std::size_t bounds = 0;
  std::size_t shape = 0;
  for (std::size_t i = 0; i < r0.slice.size(); ++i) {
    const double v0 = r0.slice[i].value;
    const double v4 = r4.slice[i].value;
    const double v8 = r8.slice[i].value;
    if (!(v8 >= v4 - tol && v4 - tol >= v0 - 2.0 * tol)) ++order;
    if (!(v8 >= v4 && v4 >= v0)) ++strict;
    for (const ExperimentReport* r : {&r0, &r4, &r8}) {
      const double v = r->slice[i].value;
      const double rt = 10.0 * max_stderr(r->slice);
      if (v < -rt || v > 10.0 + rt) ++bounds;
      if (i > 0) {
        const double se = std::max(r->slice[i].stderr_proxy, r->slice[i - 1].stderr_proxy);
        if (v < r->slice[i - 1].value - 2.0 * se) ++shape;
      }
    }
  }
  const std::size_t mid = r0.slice.size() / 2;
  return {order == 0 && bounds == 0 && shape == 0,
          fmt("tol %.4g; order violations %zu (%zu without tolerance), bound violations %zu, shape "
              "violations %zu; at x1=x2: %.4f <= %.4f <= %.4f",
              tol, order, strict, bounds, shape, r0.slice[mid].value, r4.slice[mid].value, r8.slice[mid].value)};
}

Outcome dim5_smoke() {
  ExperimentConfig c = ExperimentConfig::defaults(5);
  c.rho = 0.8;
  c.n_in = 300;
  c.n_x = 50;
  c.n_w = 200;
  c.lower_bound = true;
  c.output_dir = (std::filesystem::temp_directory_path() / "mphjb_acceptance_d5").string();
  const ExperimentReport r = run_experiment(c);
  write_report(r);
  std::size_t largest = 0;
  bool card = true;
  for (std::size_t t = 0; t < r.solve.value.grid_size(); ++t) {
    largest = std::max(largest, r.solve.value.forms(t).size());
    if (t + 1 < r.solve.value.grid_size() && r.solve.value.forms(t).size() > c.n_in * r.solve.paths.class_count()) {
      card = false;
    }
  }
  bool files = true;
  for (const char* f : {"slice.csv", "summary.json", "lower_bound.csv"})
    files = files && std::filesystem::exists(std::filesystem::path(c.output_dir) / f);
  double signed_gap = 0.0;
  for (std::size_t i = 0; i < r.slice.size(); ++i) {
    const double g = r.lower_bound[i].value - r.slice[i].value;
    if (std::abs(g) > std::abs(signed_gap)) signed_gap = g;
  }
  std::filesystem::remove_all(c.output_dir);
  return {card && files && r.stability_violations == 0,
          fmt("k=%d, max |Z_t| (t < T) within %zu, |Z_T|=%zu, stability violations %zu, reports %s, "
              "largest bound - value %.3f, %.1fs",
              r.solve.k, c.n_in * r.solve.paths.class_count(), r.terminal_form_count,
              r.stability_violations, files ? "written" : "missing", signed_gap, r.seconds)};
}

Outcome determinism() {
  const ExperimentReport& first = runs.fixed(2000);
  const ExperimentReport again = run_experiment(first.config);
  const std::string a = slice_csv(first.slice, 0.0);
  const std::string b = slice_csv(again.slice, 0.0);
  return {a == b, fmt("%zu-byte slice CSV %s", a.size(), a == b ? "identical" : "differs")};
}

Outcome complexity_scaling() {
  // The first backward step selects among the terminal forms, whose count
  // does not grow with N_in; it is left out.
  auto select_time = [](std::size_t n_in) {
    ExperimentConfig c = slice_run("fixed", 0.0, n_in);
    c.h = 0.05;
    c.n_w = 200;
    c.threads = 1;
    c.slice_points = 3;
    const ExperimentReport r = run_experiment(c);
    double s = 0.0;
    std::size_t forms = 0;
    for (std::size_t i = 0; i + 1 < r.solve.steps.size(); ++i) {
      s += r.solve.steps[i].select_seconds;
      forms += r.solve.steps[i + 1].forms;
    }
    return std::pair{s, forms};
  };
  const auto [t1, f1] = select_time(1000);
  const auto [t2, f2] = select_time(2000);
  const double ratio = t2 / t1;
  return {ratio >= 2.0 && ratio <= 6.0,
          fmt("select time %.3fs -> %.3fs, ratio %.2f (target 4 +- 50%%); forms scanned %zu -> %zu", t1,
              t2, ratio, f1, f2)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"zero-mean weight polynomial", zero_mean_weight},
      {"k = 0 reduction", ftw_reduction},
      {"automatic k selection", k_selection},
      {"nonnegative one-step weights, rho = 0.8", weights_nonnegative},
      {"discrete-increment stencil equivalence", fd_equivalence},
      {"consistency order", consistency_order},
      {"oracle equivalence, single correlation", oracle_equivalence},
      {"rho-monotonicity and value bounds", rho_monotonicity},
      {"five-dimensional smoke run", dim5_smoke},
      {"determinism", determinism},
      {"selection cost scaling", complexity_scaling},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
