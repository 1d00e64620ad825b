#include "kerrbic/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace kerrbic {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double pi = std::numbers::pi;

double interpolate(const TabulatedCoupling& t, double omega) {
  if (t.omega.empty() || omega < t.omega.front() || omega > t.omega.back()) return 0.0;
  auto it = std::upper_bound(t.omega.begin(), t.omega.end(), omega);
  if (it == t.omega.end()) return t.kc2.back();
  const auto i = static_cast<std::size_t>(it - t.omega.begin());
  const double w = (omega - t.omega[i - 1]) / (t.omega[i] - t.omega[i - 1]);
  return (1.0 - w) * t.kc2[i - 1] + w * t.kc2[i];
}

// Mean value of |K_c|^2 far from the resonance. Its Hilbert transform over the
// whole line vanishes, so it is removed from the numerical integrand.
double asymptotic_level(const CouplingModel& model) {
  return std::visit(overloaded{[](const ConstantCoupling& m) { return 2.0 * m.kappa; },
                               [](const TerminatedWaveguide& m) { return 4.0 * m.kappa; },
                               [](const FanoTwoResonator& m) { return 2.0 * m.kappa; },
                               [](const QuadraticLoss&) { return 0.0; },
                               [](const TabulatedCoupling&) { return 0.0; }},
                    model);
}

}  // namespace

void FrequencyGrid::check() const {
  if (count < 2) throw ConfigError("FrequencyGrid: count must be >= 2");
  if (!(omega_max > omega_min)) throw ConfigError("FrequencyGrid: omega_max must exceed omega_min");
  if (eta < 0.0) throw ConfigError("FrequencyGrid: eta must be positive");
}

Complex k_c(const CouplingModel& model, double omega) {
  using namespace std::complex_literals;
  return std::visit(
      overloaded{
          [](const ConstantCoupling& m) { return Complex(std::sqrt(2.0 * m.kappa), 0.0); },
          [omega](const TerminatedWaveguide& m) {
            return std::sqrt(2.0 * m.kappa) * (1.0 - std::exp(1i * (omega / m.gamma + m.theta)));
          },
          [omega](const FanoTwoResonator& m) {
            const double x = omega - m.omega_d;
            return std::sqrt(2.0 * m.kappa) * x / (x + 1i * m.gamma);
          },
          [](const QuadraticLoss&) -> Complex {
            throw UnsupportedModelError("k_c: the quadratic loss model has no explicit in-coupling function");
          },
          [omega](const TabulatedCoupling& m) { return Complex(std::sqrt(interpolate(m, omega)), 0.0); }},
      model);
}

double k_c_squared(const CouplingModel& model, double omega) {
  if (const auto* t = std::get_if<TabulatedCoupling>(&model)) return interpolate(*t, omega);
  return std::norm(k_c(model, omega));
}

double background_loss(const CouplingModel& model) {
  return std::visit(overloaded{[](const ConstantCoupling&) { return 0.0; },
                               [](const auto& m) { return m.kappa_i; }},
                    model);
}

double re_k_l(const CouplingModel& model, double omega) {
  if (const auto* q = std::get_if<QuadraticLoss>(&model)) {
    const double d = omega - q->omega0;
    return q->kappa_i + q->c2 * d * d;
  }
  return 0.5 * k_c_squared(model, omega) + background_loss(model);
}

bool has_trivial_lamb_shift(const CouplingModel& model) {
  return std::holds_alternative<ConstantCoupling>(model) || std::holds_alternative<QuadraticLoss>(model);
}

LossFunction::LossFunction(CouplingModel model, FrequencyGrid grid)
    : model_(std::move(model)), grid_(grid) {
  grid_.check();
  if (std::holds_alternative<QuadraticLoss>(model_))
    throw UnsupportedModelError("LossFunction: the quadratic loss model specifies K_l directly");
  level_ = asymptotic_level(model_);
  samples_.resize(grid_.count);
  const double h = grid_.spacing();
  double peak = 0.0;
  for (int i = 0; i < grid_.count; ++i) {
    const double f = k_c_squared(model_, grid_.omega_min + i * h);
    peak = std::max(peak, f);
    samples_[i] = f - level_;
  }
  scale_ = 0.5 * std::max(peak, level_);
}

// (1/2pi) * integral of g(w') (eta + i x) / (x^2 + eta^2) over the grid, x = w - w', taken
// at eta and eta/2 in one pass and combined so the linear error in eta cancels.
// The Taylor polynomial of g around w (to second order) is integrated in closed form, so the
// quadrature only sees a remainder that vanishes like x^3 and never resolves the Lorentzian.
// stride > 1 drops nodes to get the coarse estimate used for the error check.
Complex LossFunction::extrapolated(double omega, double eta, int stride) const {
  const double a = grid_.omega_min;
  const double h = grid_.spacing() * stride;
  const int nodes = (grid_.count - 1) / stride + 1;
  const double b = a + (nodes - 1) * h;

  const double g0 = k_c_squared(model_, omega) - level_;
  const double dw = 1e-1 * grid_.spacing();
  const double gp = k_c_squared(model_, omega + dw) - level_;
  const double gm = k_c_squared(model_, omega - dw) - level_;
  const double g1 = (gp - gm) / (2.0 * dw);
  const double g2 = (gp - 2.0 * g0 + gm) / (dw * dw);

  const double e1 = eta, e2 = 0.5 * eta;
  double re1 = 0.0, im1 = 0.0, re2 = 0.0, im2 = 0.0;
  for (int j = 0; j < nodes; ++j) {
    const double x = omega - (a + j * h);
    const double weight = (j == 0 || j == nodes - 1) ? 0.5 * h : h;
    const double r = weight * (samples_[static_cast<std::size_t>(j) * stride] - g0 + g1 * x - 0.5 * g2 * x * x);
    const double d1 = r / (x * x + e1 * e1);
    const double d2 = r / (x * x + e2 * e2);
    re1 += d1 * e1;
    im1 += d1 * x;
    re2 += d2 * e2;
    im2 += d2 * x;
  }
  const double lo = omega - a, hi = b - omega;
  auto closed = [&](double e, double& re, double& im) {
    const double arc = std::atan(hi / e) + std::atan(lo / e);
    const double log_ratio = std::log((lo * lo + e * e) / (hi * hi + e * e));
    const double even = (b - a) - e * arc;
    re += g0 * arc - g1 * 0.5 * e * log_ratio + 0.5 * g2 * e * even;
    im += g0 * 0.5 * log_ratio - g1 * even + 0.5 * g2 * (0.5 * (lo * lo - hi * hi) - 0.5 * e * e * log_ratio);
    // The constant level over the whole line: pi * level in the real part, nothing in the imaginary part.
    re += pi * level_;
  };
  closed(e1, re1, im1);
  closed(e2, re2, im2);
  return Complex(2.0 * re2 - re1, 2.0 * im2 - im1) / (2.0 * pi);
}

Complex LossFunction::evaluate(double omega, double* error_estimate) const {
  const double eta = grid_.effective_eta();
  const Complex fine = extrapolated(omega, eta, 1);
  if (error_estimate) *error_estimate = std::abs(fine - extrapolated(omega, eta, 2)) / 3.0;
  return fine + background_loss(model_);
}

Complex LossFunction::operator()(double omega) const {
  double err = 0.0;
  const Complex value = evaluate(omega, &err);
  const double reference = std::max(std::abs(value), 1e-3 * scale_);
  if (reference > 0.0 && err > 1e-3 * reference) {
    std::ostringstream os;
    os << "k_l: frequency grid too coarse at omega=" << omega << " eV (estimated relative error "
       << err / reference << ")";
    throw AccuracyError(os.str());
  }
  return value;
}

FrequencyGrid default_grid(const CouplingModel& model, double omega) {
  return std::visit(
      overloaded{[omega](const ConstantCoupling&) { return FrequencyGrid{omega - 1.0, omega + 1.0, 3, 0.0}; },
                 [omega](const QuadraticLoss&) { return FrequencyGrid{omega - 1.0, omega + 1.0, 3, 0.0}; },
                 [omega](const TerminatedWaveguide& m) {
                   const double half = 1000.0 * m.gamma;
                   return FrequencyGrid{omega - half, omega + half, 20001, 0.0};
                 },
                 [omega](const FanoTwoResonator& m) {
                   const double half = 1000.0 * m.gamma;
                   return FrequencyGrid{omega - half, omega + half, 40001, 0.0};
                 },
                 [](const TabulatedCoupling& t) {
                   if (t.omega.size() < 2) throw ConfigError("tabulated coupling needs at least two samples");
                   const int count = static_cast<int>(4 * t.omega.size() + 1);
                   return FrequencyGrid{t.omega.front(), t.omega.back(), count, 0.0};
                 }},
      model);
}

Complex k_l(const CouplingModel& model, double omega, const FrequencyGrid& grid) {
  if (std::holds_alternative<QuadraticLoss>(model) || std::holds_alternative<ConstantCoupling>(model))
    return Complex(re_k_l(model, omega), 0.0);
  return LossFunction(model, grid)(omega);
}

Complex k_l(const CouplingModel& model, double omega) {
  return k_l(model, omega, default_grid(model, omega));
}

double q_factor(const CouplingModel& model, double omega) {
  const double loss = re_k_l(model, omega);
  if (loss <= 0.0) return std::numeric_limits<double>::infinity();
  return omega / (2.0 * loss);
}

double kappa_of_n(const CouplingModel& model, double omega_a, double beta, double n) {
  return re_k_l(model, transition_frequency(omega_a, beta, n));
}

TabulatedCoupling load_tabulated(const std::string& path, double kappa_i) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open coupling table '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  {
    std::istringstream hs(line);
    std::string hash, c1, c2;
    hs >> hash >> c1 >> c2;
    if (hash != "#" || c1 != "omega_eV" || c2 != "kc2_eV")
      throw ConfigError(path + ":1: expected header '# omega_eV kc2_eV'");
  }
  TabulatedCoupling t;
  t.kappa_i = kappa_i;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double w = 0.0, f = 0.0;
    if (!(ls >> w >> f)) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected two numbers");
    if (f < 0.0) throw ConfigError(path + ":" + std::to_string(lineno) + ": |K_c|^2 must be non-negative");
    if (!t.omega.empty() && w <= t.omega.back())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": omega must be strictly increasing");
    t.omega.push_back(w);
    t.kc2.push_back(f);
  }
  if (t.omega.size() < 2) throw ConfigError(path + ": need at least two samples");
  return t;
}

std::string model_name(const CouplingModel& model) {
  return std::visit(overloaded{[](const ConstantCoupling&) { return std::string("constant"); },
                               [](const TerminatedWaveguide&) { return std::string("terminated_waveguide"); },
                               [](const FanoTwoResonator&) { return std::string("fano"); },
                               [](const QuadraticLoss&) { return std::string("quadratic"); },
                               [](const TabulatedCoupling&) { return std::string("tabulated"); }},
                    model);
}

}  // namespace kerrbic
