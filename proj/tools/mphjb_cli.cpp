// mphjb: solve / oracle / compare / check-poly / check-fd
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mphjb/benchmark.hpp"
#include "mphjb/monotone_poly.hpp"
#include "mphjb/scheme_ops.hpp"

using namespace mphjb;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "a,b;c,d" -> rows separated by ';'
Mat parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream rs(text);
  std::string row;
  while (std::getline(rs, row, ';')) {
    std::vector<double> r;
    std::istringstream cs(row);
    std::string cell;
    while (std::getline(cs, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigurationError("bad matrix entry '" + cell + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty() || rows[0].empty()) throw ConfigurationError("empty matrix");
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ConfigurationError("ragged matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

int cmd_solve(const std::string& config_path, const std::string& out_dir, bool quiet) {
  ExperimentConfig cfg = ExperimentConfig::from_json(read_file(config_path));
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  // Progress goes to stderr; the run itself is silent.
  std::fprintf(stderr, "solve: d=%d rho=%g mode=%s N_in=%zu N_x=%zu N_w=%zu h=%g seed=%llu\n",
               cfg.dimension, cfg.rho, cfg.correlation_mode.c_str(), cfg.n_in, cfg.n_x, cfg.n_w,
               cfg.h, static_cast<unsigned long long>(cfg.seed));
  const ExperimentReport rep = run_experiment(cfg);
  if (!quiet) {
    for (auto it = rep.solve.steps.rbegin(); it != rep.solve.steps.rend(); ++it) {
      std::fprintf(stderr, "  t=%.4f |Z_t|=%zu min_weight=%.4g max_residual=%.3g stderr=%.3g wall=%.2fs\n",
                   it->t, it->forms, it->min_weight, it->max_residual, it->max_stderr,
                   it->wall_seconds);
    }
  }
  write_report(rep);
  std::printf("k=%d abar=%.6g terminal_forms=%zu weight_negative=%zu stability_violations=%zu "
              "seconds=%.2f\n",
              rep.solve.k, rep.solve.abar, rep.terminal_form_count, rep.weight_negative,
              rep.stability_violations, rep.seconds);
  std::printf("wrote %s\n", (std::filesystem::path(cfg.output_dir) / "slice.csv").string().c_str());
  return 0;
}

int cmd_oracle(const std::string& config_path, std::string output) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(read_file(config_path));
  if (cfg.dimension != 2) throw ConfigurationError("oracle: only dimension 2 has a closed form");
  if (cfg.correlation_mode == "uncertain" && cfg.rho != 0.0) {
    throw ConfigurationError("oracle: needs a singleton correlation set (correlation_mode fixed or rho 0)");
  }
  const double m12 = cfg.correlation_mode == "fixed" ? cfg.rho : 0.0;
  const Mat pts = slice_points(cfg);
  std::vector<SlicePoint> slice;
  int max_points = 0;
  for (Eigen::Index p = 0; p < pts.cols(); ++p) {
    const OracleResult r = oracle_singleton_price(m12, cfg.volatilities, pts.col(p), cfg.horizon,
                                                  cfg.k1, cfg.k2);
    max_points = std::max(max_points, r.nodes);
    slice.push_back({pts(cfg.slice_sweep_index - 1, p) - pts(cfg.slice_reference_index - 1, p),
                     r.value, 0.0});
  }
  if (output.empty()) output = (std::filesystem::path(cfg.output_dir) / "oracle.csv").string();
  const auto parent = std::filesystem::path(output).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream(output) << slice_csv(slice, 0.0);
  nlohmann::json meta;
  meta["m12"] = m12;
  meta["method"] = "closed-form inner coordinate, trapezoid rule on the outer coordinate";
  meta["tolerance"] = 1e-6;
  meta["max_points"] = max_points;
  meta["parameters"] = nlohmann::json::parse(cfg.to_json());
  std::ofstream(output + ".json") << meta.dump(2) << "\n";
  std::printf("wrote %s (max points %d)\n", output.c_str(), max_points);
  return 0;
}

int cmd_compare(const std::string& run_dir, const std::string& oracle_path) {
  const auto run = read_slice_csv((std::filesystem::path(run_dir) / "slice.csv").string());
  const auto oracle = read_slice_csv(oracle_path);
  if (run.size() != oracle.size()) throw ConfigurationError("compare: slice lengths differ");
  double gap = 0.0;
  double at = 0.0;
  double se = 0.0;
  for (std::size_t i = 0; i < run.size(); ++i) {
    if (std::abs(run[i].offset - oracle[i].offset) > 1e-9) {
      throw ConfigurationError("compare: slice grids differ");
    }
    const double g = std::abs(run[i].value - oracle[i].value);
    if (g > gap) {
      gap = g;
      at = run[i].offset;
    }
    se = std::max(se, run[i].stderr_proxy);
  }
  const double threshold = std::max(0.3, 4.0 * se);
  std::printf("max_gap=%.6g at x_sweep=%.6g max_stderr_proxy=%.6g threshold=%.6g within=%s\n", gap,
              at, se, threshold, gap <= threshold ? "yes" : "no");
  return 0;
}

int cmd_check_poly(const std::string& sigma_text, int dimension, double rho, int k_opt, double h,
                   double delta, const std::string& gap_text, std::size_t samples,
                   std::uint64_t seed) {
  Mat sigma;
  if (!sigma_text.empty()) {
    sigma = parse_matrix(sigma_text);
  } else {
    // Largest residual factor of the uncertain-correlation generator.
    const auto modes = build_correlation_modes(dimension, rho);
    const GeneratorChoice gen = build_uncertain_correlation_generator(Vec::Ones(dimension) * 0.3, modes);
    double best = -1.0;
    for (const auto& f : *gen.constant_factors) {
      if (f.abar > best) {
        best = f.abar;
        sigma = f.sigma;
      }
    }
  }
  const int d = static_cast<int>(sigma.rows());
  const double abar = sigma.squaredNorm();
  const int k = k_opt >= 0 ? k_opt : min_k_for_monotonicity(abar);
  Vec gap = Vec::Zero(d);
  if (!gap_text.empty()) {
    const Mat g = parse_matrix(gap_text);
    if (g.size() != d) throw ConfigurationError("drift gap must have one entry per row of Sigma");
    gap = Eigen::Map<const Vec>(g.data(), d);
  }
  if (sigma.cols() == 0) {
    std::printf("Sigma has no columns: P == 0, every weight is 1 - h delta\n");
    return 1.0 - h * delta >= 0.0 ? 0 : 1;
  }
  const MonotonePolynomial p = MonotonePolynomial::build(sigma, k);
  const WeightProbe probe = probe_weights(p, gap, Mat::Identity(d, d), delta, h, samples, seed);
  std::printf("d=%d ell=%d abar=%.10g k=%d degree=%d\n", d, static_cast<int>(sigma.cols()), abar, k,
              p.degree());
  std::printf("c_k=%.17g K=%.17g\n", p.ck(), p.K());
  std::printf("mean_P=%.6g stderr_P=%.6g samples=%zu\n", probe.mean_P, probe.stderr_P, probe.samples);
  std::printf("min_weight=%.10g (h=%g delta=%g)\n", probe.min_weight, h, delta);
  return probe.min_weight >= 0.0 ? 0 : 1;
}

int cmd_check_fd(double a11, int k, double nu, const std::string& A_text) {
  const Stencil1d s = discrete_increment_operator_1d(a11, k, nu);
  std::printf("1d: A11=%g k=%d nu=%g b=%.17g\n", a11, k, nu, s.b);
  std::printf("    weights minus=%.17g center=%.17g plus=%.17g\n", s.minus, s.center, s.plus);
  std::printf("    consistent=%s monotone=%s strictly_monotone=%s\n", s.consistent ? "yes" : "no",
              s.monotone ? "yes" : "no", s.strictly_monotone ? "yes" : "no");
  if (!A_text.empty()) {
    const Stencil2d w = discrete_increment_weights_2d(parse_matrix(A_text));
    std::printf("2d: b=%.17g sum=%.17g monotone=%s\n", w.b, w.sum(), w.monotone() ? "yes" : "no");
    for (int e2 = 1; e2 >= -1; --e2) {
      std::printf("   ");
      for (int e1 = -1; e1 <= 1; ++e1) {
        std::printf(" %12.8f", w.weight[static_cast<std::size_t>(e1 + 1)][static_cast<std::size_t>(e2 + 1)]);
      }
      std::printf("\n");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"max-plus probabilistic scheme for HJB equations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool quiet = false;
  auto* solve = app.add_subcommand("solve", "run a benchmark experiment");
  solve->add_option("--config", config_path, "experiment JSON")->required();
  solve->add_option("--output-dir", out_dir, "override output_dir");
  solve->add_flag("--quiet", quiet, "no per-step log");

  std::string oracle_out;
  auto* oracle = app.add_subcommand("oracle", "reference prices on the slice (d = 2, one correlation)");
  oracle->add_option("--config", config_path, "experiment JSON")->required();
  oracle->add_option("--output", oracle_out, "CSV path (default output_dir/oracle.csv)");

  std::string run_dir;
  std::string oracle_path;
  auto* compare = app.add_subcommand("compare", "gap between a run and an oracle slice");
  compare->add_option("--run", run_dir, "run output directory")->required();
  compare->add_option("--oracle", oracle_path, "oracle CSV")->required();

  std::string sigma_text;
  std::string gap_text;
  int dimension = 2;
  double rho = 0.8;
  int k = -1;
  double h = 0.01;
  double delta = 0.0;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
  auto* poly = app.add_subcommand("check-poly", "weight polynomial constants and sampled minimum weight");
  poly->add_option("--sigma", sigma_text, "Sigma as 'a,b;c,d' (default: uncertain-correlation factor)");
  poly->add_option("--dimension", dimension, "dimension of the correlation builder");
  poly->add_option("--rho", rho, "correlation bound of the builder");
  poly->add_option("--k", k, "polynomial order (default: smallest monotone k)");
  poly->add_option("--time-step", h, "time step h");
  poly->add_option("--delta", delta, "discount rate");
  poly->add_option("--drift-gap", gap_text, "drift gap in normalised coordinates, 'a;b'");
  poly->add_option("--samples", samples, "normal samples");
  poly->add_option("--seed", seed, "seed");

  double a11 = 2.0;
  int fd_k = 0;
  double nu = std::sqrt(3.0);
  std::string A_text;
  auto* fd = app.add_subcommand("check-fd", "discrete-increment stencils");
  fd->add_option("--a11", a11, "A11 for the 1D stencil");
  fd->add_option("--k", fd_k, "polynomial order");
  fd->add_option("--nu", nu, "increment scale (> 1)");
  fd->add_option("--A", A_text, "2x2 matrix 'a,b;c,d' for the 9-point stencil");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*solve) return cmd_solve(config_path, out_dir, quiet);
    if (*oracle) return cmd_oracle(config_path, oracle_out);
    if (*compare) return cmd_compare(run_dir, oracle_path);
    if (*poly) return cmd_check_poly(sigma_text, dimension, rho, k, h, delta, gap_text, samples, seed);
    if (*fd) return cmd_check_fd(a11, fd_k, nu, A_text);
  } catch (const ConfigurationError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return 0;
}
