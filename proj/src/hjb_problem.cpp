#include "mphjb/hjb_problem.hpp"

#include <cmath>
#include <utility>

#include <json.hpp>

namespace mphjb {

ProblemSpec::ProblemSpec(int dimension, double horizon, std::vector<ModeCoefficients> modes,
                         std::function<double(const Vec&)> payoff,
                         std::optional<LqControl> control)
    : dimension_(dimension),
      horizon_(horizon),
      modes_(std::move(modes)),
      payoff_(std::move(payoff)),
      control_(std::move(control)) {
  if (dimension_ <= 0) throw ConfigurationError("ProblemSpec: dimension must be positive");
  if (!(horizon_ > 0.0)) throw ConfigurationError("ProblemSpec: horizon must be positive");
  if (modes_.empty()) throw ConfigurationError("ProblemSpec: mode set is empty");
  if (!payoff_) throw ConfigurationError("ProblemSpec: terminal payoff is missing");
  for (const auto& mode : modes_) {
    if (!mode.volatility) {
      throw ConfigurationError("ProblemSpec: mode '" + mode.name + "' has no volatility");
    }
  }
  if (!control_) return;

  const int p = control_->control_dim;
  if (p <= 0) throw ConfigurationError("ProblemSpec: LQ control dimension must be positive");
  if (control_->modes.size() != modes_.size()) {
    throw ConfigurationError("ProblemSpec: LQ descriptor needs one entry per mode");
  }
  for (std::size_t m = 0; m < modes_.size(); ++m) {
    const auto& lq = control_->modes[m];
    if (lq.drift_gain.rows() != dimension_ || lq.drift_gain.cols() != p ||
        lq.reward_hessian.rows() != p || lq.reward_hessian.cols() != p ||
        lq.reward_cross.rows() != p || lq.reward_cross.cols() != dimension_ ||
        lq.reward_linear.size() != p) {
      throw ConfigurationError("ProblemSpec: LQ descriptor of mode " + std::to_string(m) +
                               " has inconsistent shapes");
    }
    const Mat neg = -0.5 * (lq.reward_hessian + lq.reward_hessian.transpose());
    Eigen::LLT<Mat> llt(neg);
    if (llt.info() != Eigen::Success) {
      throw ConfigurationError("ProblemSpec: reward of mode " + std::to_string(m) +
                               " is not strictly concave in u");
    }
  }
}

Vec ProblemSpec::drift(std::size_t m, const Vec& x, const Vec& u) const {
  const auto& mode = modes_.at(m);
  return mode.drift ? mode.drift(x, u) : Vec::Zero(dimension_);
}

Mat ProblemSpec::volatility(std::size_t m, const Vec& x, const Vec& u) const {
  return modes_.at(m).volatility(x, u);
}

double ProblemSpec::discount(std::size_t m, const Vec& x, const Vec& u) const {
  const auto& mode = modes_.at(m);
  return mode.discount ? mode.discount(x, u) : 0.0;
}

double ProblemSpec::reward(std::size_t m, const Vec& x, const Vec& u) const {
  const auto& mode = modes_.at(m);
  return mode.reward ? mode.reward(x, u) : 0.0;
}

QuadraticForm::QuadraticForm(Mat Q, Vec b, double c) : b_(std::move(b)), c_(c) {
  if (Q.rows() != Q.cols() || Q.rows() != b_.size()) {
    throw ConfigurationError("QuadraticForm: Q must be square and match b");
  }
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  const double asym = (Q - Q.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw ConfigurationError("QuadraticForm: Q is not symmetric");
  }
  Q_ = 0.5 * (Q + Q.transpose());
}

QuadraticForm QuadraticForm::constant(int dimension, double c) {
  return QuadraticForm(Mat::Zero(dimension, dimension), Vec::Zero(dimension), c);
}

bool QuadraticForm::operator==(const QuadraticForm& other) const {
  return c_ == other.c_ && b_.size() == other.b_.size() && b_ == other.b_ && Q_ == other.Q_;
}

double eval_quad(const QuadraticForm& z, const Vec& x) {
  require_dim(x.size(), z.dimension(), "eval_quad");
  return 0.5 * x.dot(z.Q() * x) + z.b().dot(x) + z.c();
}

SupValue sup_eval(const std::vector<QuadraticForm>& Z, const Vec& x) {
  if (Z.empty()) throw UsageError("sup_eval: empty form set");
  SupValue best{eval_quad(Z[0], x), 0};
  for (std::size_t i = 1; i < Z.size(); ++i) {
    const double v = eval_quad(Z[i], x);
    if (v > best.value) best = {v, i};
  }
  return best;
}

std::size_t integral_step_count(double horizon, double h) {
  if (!(h > 0.0) || !(horizon > 0.0)) {
    throw ConfigurationError("time grid: horizon and step must be positive");
  }
  const double ratio = horizon / h;
  const double n = std::round(ratio);
  if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigurationError("time grid: T/h is not an integer");
  }
  return static_cast<std::size_t>(n);
}

MaxPlusValueFunction::MaxPlusValueFunction(int dimension, double horizon, double h)
    : dimension_(dimension), horizon_(horizon), h_(h) {
  const std::size_t n = integral_step_count(horizon, h);
  forms_.resize(n + 1);
  stderr_.resize(n + 1);
}

std::size_t MaxPlusValueFunction::index_of(double t) const {
  const double r = t / h_;
  const double i = std::round(r);
  if (i < 0.0 || i >= static_cast<double>(forms_.size()) ||
      std::abs(r - i) > 1e-9 * std::max(1.0, r)) {
    throw UsageError("value function: t = " + std::to_string(t) + " is not on the time grid");
  }
  return static_cast<std::size_t>(i);
}

void MaxPlusValueFunction::set_forms(std::size_t i, std::vector<QuadraticForm> forms,
                                     std::vector<double> stderr_per_form) {
  for (const auto& z : forms) require_dim(z.dimension(), dimension_, "set_forms");
  if (stderr_per_form.empty()) stderr_per_form.assign(forms.size(), 0.0);
  if (stderr_per_form.size() != forms.size()) {
    throw UsageError("set_forms: stderr annotations must match the form count");
  }
  forms_.at(i) = std::move(forms);
  stderr_.at(i) = std::move(stderr_per_form);
}

SupValue MaxPlusValueFunction::evaluate(std::size_t i, const Vec& x) const {
  return sup_eval(forms_.at(i), x);
}

std::string MaxPlusValueFunction::to_json() const {
  using nlohmann::json;
  json doc;
  doc["dimension"] = dimension_;
  doc["horizon"] = horizon_;
  doc["h"] = h_;
  json steps = json::array();
  for (std::size_t i = 0; i < forms_.size(); ++i) {
    json forms = json::array();
    for (std::size_t f = 0; f < forms_[i].size(); ++f) {
      const auto& z = forms_[i][f];
      std::vector<double> q;
      q.reserve(static_cast<std::size_t>(dimension_ * dimension_));
      for (int r = 0; r < dimension_; ++r)
        for (int c = 0; c < dimension_; ++c) q.push_back(z.Q()(r, c));
      std::vector<double> b(z.b().data(), z.b().data() + z.b().size());
      forms.push_back({{"Q", q}, {"b", b}, {"c", z.c()}, {"stderr", stderr_[i][f]}});
    }
    steps.push_back({{"t", time_at(i)}, {"forms", forms}});
  }
  doc["steps"] = steps;
  return doc.dump();
}

MaxPlusValueFunction MaxPlusValueFunction::from_json(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("value function dump: ") + e.what());
  }
  try {
    const int d = doc.at("dimension").get<int>();
    MaxPlusValueFunction vf(d, doc.at("horizon").get<double>(), doc.at("h").get<double>());
    const auto& steps = doc.at("steps");
    if (steps.size() != vf.grid_size()) {
      throw ConfigurationError("value function dump: step count does not match T/h");
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
      std::vector<QuadraticForm> forms;
      std::vector<double> se;
      for (const auto& f : steps[i].at("forms")) {
        const auto q = f.at("Q").get<std::vector<double>>();
        const auto b = f.at("b").get<std::vector<double>>();
        if (q.size() != static_cast<std::size_t>(d * d) || b.size() != static_cast<std::size_t>(d)) {
          throw ConfigurationError("value function dump: form has wrong size");
        }
        Mat Q(d, d);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) Q(r, c) = q[static_cast<std::size_t>(r * d + c)];
        forms.emplace_back(Q, Eigen::Map<const Vec>(b.data(), d), f.at("c").get<double>());
        se.push_back(f.value("stderr", 0.0));
      }
      vf.set_forms(i, std::move(forms), std::move(se));
    }
    return vf;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("value function dump: ") + e.what());
  }
}

}  // namespace mphjb
