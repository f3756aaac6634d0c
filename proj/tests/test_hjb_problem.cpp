#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mphjb/hjb_problem.hpp"
#include "mphjb/payoff.hpp"
#include "test_support.hpp"

using namespace mphjb;

namespace {

Vec v2(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}

QuadraticForm form2(double q11, double q12, double q22, double b1, double b2, double c) {
  Mat Q(2, 2);
  Q << q11, q12, q12, q22;
  return QuadraticForm(Q, v2(b1, b2), c);
}

}  // namespace

TEST_CASE("eval_quad on written-out forms") {
  CHECK(eval_quad(QuadraticForm::constant(3, 3.0), Vec::Constant(3, 7.5)) == 3.0);
  CHECK(eval_quad(form2(2, 0, 2, 0, 0, 0), v2(1, 1)) == 2.0);
  CHECK(eval_quad(form2(0, 0, 0, 1, -1, 5), v2(60, 50)) == 15.0);
  CHECK(eval_quad(form2(1, 0.5, -2, 0.25, 0, -1), v2(2, 3)) ==
        doctest::Approx(0.5 * (4 + 2 * 0.5 * 6 - 2 * 9) + 0.5 - 1).epsilon(1e-15));
  CHECK_THROWS_AS(eval_quad(form2(1, 0, 1, 0, 0, 0), Vec::Zero(3)), ConfigurationError);
}

TEST_CASE("QuadraticForm symmetry is enforced") {
  Mat Q(2, 2);
  Q << 1, 2, 2.5, 1;
  CHECK_THROWS_AS(QuadraticForm(Q, Vec::Zero(2), 0.0), ConfigurationError);
  Q(1, 0) = 2.0 * (1 + 1e-14);
  const QuadraticForm z(Q, Vec::Zero(2), 0.0);
  CHECK(z.Q()(0, 1) == z.Q()(1, 0));
  CHECK_THROWS_AS(QuadraticForm(Mat::Zero(2, 3), Vec::Zero(2), 0.0), ConfigurationError);
}

TEST_CASE("sup_eval picks the maximum with lowest-index ties") {
  const std::vector<QuadraticForm> Z{QuadraticForm::constant(2, 0.0),
                                     QuadraticForm::constant(2, 1.0)};
  const SupValue s = sup_eval(Z, v2(3, -4));
  CHECK(s.value == 1.0);
  CHECK(s.index == 1);

  const std::vector<QuadraticForm> one{form2(-1, 0, -1, 1, 2, 3)};
  CHECK(sup_eval(one, v2(0.5, 0.25)).value == eval_quad(one[0], v2(0.5, 0.25)));

  const std::vector<QuadraticForm> ties{QuadraticForm::constant(2, 2.0), form2(0, 0, 0, 1, 0, 0),
                                        QuadraticForm::constant(2, 2.0)};
  CHECK(sup_eval(ties, v2(2, 0)).index == 0);
  CHECK(sup_eval(ties, v2(5, 0)).index == 1);

  CHECK_THROWS_AS(sup_eval({}, v2(0, 0)), UsageError);
}

TEST_CASE("sup_eval is monotone in the form set") {
  std::mt19937_64 g(11);
  std::vector<QuadraticForm> Z;
  std::vector<Vec> xs;
  for (int i = 0; i < 50; ++i) xs.push_back(testing::random_vector(g, 3, 5.0));
  std::vector<double> prev(xs.size(), -INFINITY);
  for (int n = 0; n < 20; ++n) {
    const Mat S = testing::random_symmetric(g, 3);
    Z.emplace_back(S, testing::random_vector(g, 3), testing::random_vector(g, 1)(0));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double v = sup_eval(Z, xs[i]).value;
      CHECK(v >= prev[i]);
      prev[i] = v;
    }
  }
}

TEST_CASE("call spread and scalar payoff approximation") {
  CHECK(call_spread(-10, -5, 5) == 0.0);
  CHECK(call_spread(0, -5, 5) == 5.0);
  CHECK(call_spread(100, -5, 5) == 10.0);

  ScalarPayoffOptions o;
  const ScalarPayoffApproximation a = approximate_scalar_payoff(o);
  REQUIRE(!a.forms.empty());
  CHECK(a.forms[0].a == 0.0);
  CHECK(a.forms[0].b == 0.0);
  CHECK(a.forms[0].c == 0.0);
  auto envelope = [&](double s) {
    double best = -INFINITY;
    for (const auto& f : a.forms) best = std::max(best, f(s));
    return best;
  };
  CHECK(std::abs(envelope(-5.0)) <= o.epsilon);
  CHECK(std::abs(envelope(-20.0)) <= o.epsilon);
  CHECK(envelope(0.0) >= 5.0 - o.epsilon);
  CHECK(envelope(0.0) <= 5.0 + 1e-9);
  CHECK(envelope(1000.0) >= 10.0 - o.epsilon);
  CHECK(envelope(1000.0) <= 10.0 + 1e-9);
  CHECK(a.achieved_gap <= o.epsilon);
  CHECK(a.max_overshoot <= 1e-9);

  // Lower approximation on random points of [-R, R].
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(-o.range, o.range);
  double worst_over = -INFINITY;
  double worst_gap = -INFINITY;
  for (int i = 0; i < 10000; ++i) {
    const double s = i < 2000 ? u(g) / 50.0 : u(g);
    const double psi = call_spread(s, o.K1, o.K2);
    worst_over = std::max(worst_over, envelope(s) - psi);
    worst_gap = std::max(worst_gap, psi - envelope(s));
  }
  CHECK(worst_over <= 1e-9);
  CHECK(worst_gap <= o.epsilon);
}

TEST_CASE("payoff approximation rejects bad options") {
  ScalarPayoffOptions o;
  o.K1 = 5;
  o.K2 = -5;
  CHECK_THROWS_AS(approximate_scalar_payoff(o), ConfigurationError);
  o = {};
  o.range = 4;
  CHECK_THROWS_AS(approximate_scalar_payoff(o), ConfigurationError);
  o = {};
  o.epsilon = 1e-4;
  o.max_forms = 5;
  CHECK_THROWS_AS(approximate_scalar_payoff(o), NumericalError);
}

TEST_CASE("lifted payoff forms") {
  ScalarPayoffOptions o;
  const auto scalar = approximate_scalar_payoff(o).forms;

  const auto d2 = lift_payoff(scalar, {0}, {1}, 2);
  CHECK(d2.size() == scalar.size());
  CHECK(std::abs(sup_eval(d2, v2(50, 50)).value - 5.0) <= o.epsilon);
  CHECK(std::abs(sup_eval(d2, v2(55, 50)).value - 10.0) <= o.epsilon);

  const std::vector<int> I{0, 2, 4};
  const std::vector<int> J{1, 3};
  const auto d5 = lift_payoff(scalar, I, J, 5);
  CHECK(d5.size() == scalar.size() * 6);
  for (const auto& z : d5) CHECK((z.Q().array() != 0.0).count() <= 4);
  Vec x(5);
  x << 60, 50, 50, 50, 50;
  CHECK(std::abs(sup_eval(d5, x).value - 10.0) <= o.epsilon);
  CHECK(std::abs(sup_eval(d5, Vec::Constant(5, 42.0)).value - 5.0) <= o.epsilon);

  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 500; ++i) {
    for (int c = 0; c < 5; ++c) x(c) = u(g);
    const double psi = max_min_spread_payoff(x, I, J, o.K1, o.K2);
    const double v = sup_eval(d5, x).value;
    CHECK(v <= psi + 1e-9);
    CHECK(v >= psi - o.epsilon);
    CHECK(v >= -1e-9);
    CHECK(v <= o.K2 - o.K1 + o.epsilon);
  }

  CHECK_THROWS_AS(lift_payoff(scalar, {0}, {0}, 2), UsageError);
  CHECK_THROWS_AS(lift_payoff(scalar, {0}, {2}, 2), UsageError);
  CHECK_THROWS_AS(lift_payoff(scalar, {}, {1}, 2), UsageError);
}

TEST_CASE("time grid and value function container") {
  CHECK(integral_step_count(0.25, 0.01) == 25);
  CHECK_THROWS_AS(integral_step_count(0.25, 0.03), ConfigurationError);

  MaxPlusValueFunction vf(2, 0.25, 0.01);
  CHECK(vf.grid_size() == 26);
  CHECK(vf.index_of(0.13) == 13);
  CHECK_THROWS_AS(vf.index_of(0.125), UsageError);

  const std::vector<QuadraticForm> Z{form2(-0.1, 0.02, -0.3, 1.0 / 3.0, 0, 2), QuadraticForm::constant(2, 1)};
  vf.set_forms(3, Z, {0.5, 0.25});
  vf.set_forms(25, {QuadraticForm::constant(2, 0.0)});
  CHECK(vf.form_stderr(3)[1] == 0.25);
  CHECK_THROWS_AS(vf.set_forms(3, Z, {1.0}), UsageError);

  const MaxPlusValueFunction back = MaxPlusValueFunction::from_json(vf.to_json());
  CHECK(back.grid_size() == vf.grid_size());
  CHECK(back.forms(3) == vf.forms(3));
  CHECK(back.forms(25) == vf.forms(25));
  CHECK(back.evaluate(3, v2(1, 2)).value == vf.evaluate(3, v2(1, 2)).value);
  CHECK_THROWS_AS(MaxPlusValueFunction::from_json("{"), ConfigurationError);
}

TEST_CASE("ProblemSpec validation") {
  ModeCoefficients m;
  m.name = "m";
  m.volatility = [](const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  auto zero = [](const Vec&) { return 0.0; };
  CHECK_THROWS_AS(ProblemSpec(1, 1.0, {}, zero), ConfigurationError);
  CHECK_THROWS_AS(ProblemSpec(1, 0.0, {m}, zero), ConfigurationError);

  const ProblemSpec plain(1, 1.0, {m}, zero);
  CHECK(plain.drift(0, Vec::Ones(1), Vec()).isZero());
  CHECK(plain.discount(0, Vec::Ones(1), Vec()) == 0.0);
  CHECK(plain.reward(0, Vec::Ones(1), Vec()) == 0.0);

  LqControl ctl;
  ctl.control_dim = 1;
  LqModeStructure s;
  s.drift_gain = Mat::Ones(1, 1);
  s.reward_hessian = Mat::Constant(1, 1, 1.0);  // convex: rejected
  s.reward_cross = Mat::Zero(1, 1);
  s.reward_linear = Vec::Zero(1);
  ctl.modes = {s};
  CHECK_THROWS_AS(ProblemSpec(1, 1.0, {m}, zero, ctl), ConfigurationError);
  ctl.modes[0].reward_hessian(0, 0) = -1.0;
  CHECK_NOTHROW(ProblemSpec(1, 1.0, {m}, zero, ctl));
}
