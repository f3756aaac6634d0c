#include "mphjb/payoff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mphjb {

namespace {

/// Parabola in tangent form: value + slope (s - s0) - curvature/2 (s - s0)^2.
struct Tangent {
  double s0;
  double value;
  double slope;
  double curvature;

  double operator()(double s) const {
    const double u = s - s0;
    return value + slope * u - 0.5 * curvature * u * u;
  }

  ScalarQuadratic expanded() const {
    return {-curvature, slope + curvature * s0, value - slope * s0 - 0.5 * curvature * s0 * s0};
  }
};

class TangentFamily {
 public:
  explicit TangentFamily(const ScalarPayoffOptions& o)
      : K1_(o.K1), K2_(o.K2), height_(o.K2 - o.K1) {}

  // Tangent to s - K1 at s0 in [K1, K2). The vertex touches the plateau.
  Tangent rising(double s0) const {
    return {s0, s0 - K1_, 1.0, 1.0 / (2.0 * (K2_ - s0))};
  }

  // Tangent to the plateau at s0 > K2.
  Tangent plateau(double s0) const {
    const double left = s0 - K1_;
    const double k_zero = 2.0 * height_ / (left * left);  // stays <= 0 left of K1
    if (left >= 2.0 * height_) return {s0, height_, 0.0, k_zero};
    const double k_ramp = 1.0 / (2.0 * (s0 - K2_));  // stays under the rising piece
    return {s0, height_, 0.0, std::max(k_zero, k_ramp)};
  }

  double payoff(double s) const { return call_spread(s, K1_, K2_); }

  // Largest payoff - max(0, p, q) over [a, b], sampled.
  double pair_gap(const Tangent& p, const Tangent& q, double a, double b) const {
    constexpr int kSamples = 256;
    double worst = 0.0;
    for (int i = 0; i <= kSamples; ++i) {
      const double s = a + (b - a) * i / kSamples;
      const double env = std::max({0.0, p(s), q(s)});
      worst = std::max(worst, payoff(s) - env);
    }
    return worst;
  }

 private:
  double K1_, K2_, height_;
};

// Largest x in (lo, hi] with ok(x), assuming ok is monotone decreasing in x
// and ok(lo) holds.
template <class Pred>
double largest_feasible(double lo, double hi, Pred ok) {
  if (ok(hi)) return hi;
  for (int it = 0; it < 100 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

double call_spread(double s, double K1, double K2) {
  return std::max(s - K1, 0.0) - std::max(s - K2, 0.0);
}

ScalarPayoffApproximation approximate_scalar_payoff(const ScalarPayoffOptions& o) {
  if (!(o.K1 < o.K2)) throw ConfigurationError("payoff approximation: need K1 < K2");
  if (!(o.range > std::abs(o.K1) && o.range > std::abs(o.K2))) {
    throw ConfigurationError("payoff approximation: need R > |K1|, |K2|");
  }
  if (!(o.epsilon > 0.0)) throw ConfigurationError("payoff approximation: epsilon must be positive");

  const TangentFamily family(o);
  const double target = 0.9 * o.epsilon;
  std::vector<Tangent> tangents;
  auto over_budget = [&] { return tangents.size() + 1 > o.max_forms; };

  // Rising piece: walk from K1 until the last tangent covers the corner at K2
  // (its gap at K2 is (K2 - s0)/4).
  double s = o.K1;
  tangents.push_back(family.rising(s));
  while ((o.K2 - s) / 4.0 > target && !over_budget()) {
    const Tangent cur = family.rising(s);
    const double next = largest_feasible(s, o.K2 - 1e-12, [&](double u) {
      return family.pair_gap(cur, family.rising(u), s, u) <= target;
    });
    if (next <= s) break;
    s = next;
    tangents.push_back(family.rising(s));
  }

  // Plateau: the first tangent must cover [K2, s0] on its own.
  s = largest_feasible(o.K2, o.range, [&](double u) {
    if (u <= o.K2) return true;
    const Tangent p = family.plateau(u);
    return 0.5 * p.curvature * (u - o.K2) * (u - o.K2) <= target;
  });
  if (s <= o.K2) s = o.K2 + 4.0 * target;
  tangents.push_back(family.plateau(s));
  while (!over_budget()) {
    const Tangent cur = family.plateau(s);
    if (s >= o.range || 0.5 * cur.curvature * (o.range - s) * (o.range - s) <= target) break;
    const double next = largest_feasible(s, o.range, [&](double u) {
      return family.pair_gap(cur, family.plateau(u), s, u) <= target;
    });
    if (next <= s) break;
    s = next;
    tangents.push_back(family.plateau(s));
  }

  ScalarPayoffApproximation out;
  out.forms.push_back({0.0, 0.0, 0.0});
  for (const auto& t : tangents) out.forms.push_back(t.expanded());

  // Verification grid of step epsilon / 10 over [-R, R].
  const double step = o.epsilon / 10.0;
  const auto n = static_cast<std::size_t>(std::ceil(2.0 * o.range / step));
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = std::min(-o.range + static_cast<double>(i) * step, o.range);
    double env = -std::numeric_limits<double>::infinity();
    for (const auto& f : out.forms) env = std::max(env, f(x));
    const double psi = family.payoff(x);
    out.achieved_gap = std::max(out.achieved_gap, psi - env);
    out.max_overshoot = std::max(out.max_overshoot, env - psi);
  }
  if (out.achieved_gap > o.epsilon || out.max_overshoot > 1e-9) {
    std::ostringstream msg;
    msg << "payoff approximation: epsilon = " << o.epsilon << " not met with "
        << out.forms.size() << " forms (achieved gap " << out.achieved_gap << ", overshoot "
        << out.max_overshoot << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

double max_min_spread_payoff(const Vec& x, const std::vector<int>& I, const std::vector<int>& J,
                             double K1, double K2) {
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (int i : I) hi = std::max(hi, x(i));
  for (int j : J) lo = std::min(lo, x(j));
  return call_spread(hi - lo, K1, K2);
}

std::vector<QuadraticForm> lift_payoff(const std::vector<ScalarQuadratic>& forms,
                                       const std::vector<int>& I, const std::vector<int>& J,
                                       int dimension) {
  if (I.empty() || J.empty()) throw UsageError("lift_payoff: index sets must be nonempty");
  auto check = [&](int idx) {
    if (idx < 0 || idx >= dimension) {
      throw UsageError("lift_payoff: index " + std::to_string(idx) + " out of range");
    }
  };
  for (int i : I) check(i);
  for (int j : J) check(j);
  for (int i : I) {
    if (std::find(J.begin(), J.end(), i) != J.end()) {
      throw UsageError("lift_payoff: index sets must be disjoint");
    }
  }

  std::vector<QuadraticForm> out;
  out.reserve(forms.size() * I.size() * J.size());
  for (const auto& f : forms) {
    for (int i : I) {
      for (int j : J) {
        Mat Q = Mat::Zero(dimension, dimension);
        Q(i, i) = f.a;
        Q(j, j) = f.a;
        Q(i, j) = -f.a;
        Q(j, i) = -f.a;
        Vec b = Vec::Zero(dimension);
        b(i) = f.b;
        b(j) = -f.b;
        out.emplace_back(std::move(Q), std::move(b), f.c);
      }
    }
  }
  return out;
}

}  // namespace mphjb
