#include "kerrbic/dynamics.hpp"

#include "kerrbic/csv.hpp"
#include "kerrbic/fockspace.hpp"
#include "kerrbic/observables.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <list>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

namespace kerrbic {

using units::fs_to_internal;
using units::internal_to_fs;

// ---------------------------------------------------------------------------
// Drive and configuration

double DriveEnvelope::start_fs() const {
  switch (kind) {
    case Kind::none: return 0.0;
    case Kind::gaussian: return center_fs - 4.0 * duration_fs;
    case Kind::sampled: return sample_times_fs.empty() ? 0.0 : sample_times_fs.front();
  }
  return 0.0;
}

double DriveEnvelope::end_fs() const {
  switch (kind) {
    case Kind::none: return 0.0;
    case Kind::gaussian: return center_fs + 4.0 * duration_fs;
    case Kind::sampled: return sample_times_fs.empty() ? 0.0 : sample_times_fs.back();
  }
  return 0.0;
}

Complex DriveEnvelope::envelope(double t_fs) const {
  switch (kind) {
    case Kind::none: return 0.0;
    case Kind::gaussian: {
      if (t_fs < start_fs() || t_fs > end_fs()) return 0.0;
      const double x = (t_fs - center_fs) / duration_fs;
      return std::exp(-4.0 * std::numbers::ln2 * x * x);
    }
    case Kind::sampled: {
      if (sample_times_fs.empty() || t_fs < sample_times_fs.front() || t_fs > sample_times_fs.back()) return 0.0;
      auto it = std::upper_bound(sample_times_fs.begin(), sample_times_fs.end(), t_fs);
      if (it == sample_times_fs.end()) return samples.back();
      const auto i = static_cast<std::size_t>(it - sample_times_fs.begin());
      const double w = (t_fs - sample_times_fs[i - 1]) / (sample_times_fs[i] - sample_times_fs[i - 1]);
      return (1.0 - w) * samples[i - 1] + w * samples[i];
    }
  }
  return 0.0;
}

void DriveEnvelope::check() const {
  if (kind == Kind::gaussian && !(duration_fs > 0.0)) throw ConfigError("drive: pulse duration must be positive");
  if (kind == Kind::sampled) {
    if (sample_times_fs.size() < 2 || sample_times_fs.size() != samples.size())
      throw ConfigError("drive: sampled envelope needs matching times and values (at least two)");
    for (std::size_t i = 1; i < sample_times_fs.size(); ++i)
      if (!(sample_times_fs[i] > sample_times_fs[i - 1]))
        throw ConfigError("drive: sample times must be strictly increasing");
  }
}

DriveEnvelope DriveEnvelope::gaussian(Complex amplitude, double center_fs, double fwhm_fs) {
  DriveEnvelope d;
  d.kind = Kind::gaussian;
  d.amplitude = amplitude;
  d.center_fs = center_fs;
  d.duration_fs = fwhm_fs;
  return d;
}

void SimulationConfig::check() const {
  if (!(omega_a > 0.0)) throw ConfigError("omega_a must be positive");
  if (beta < 0.0) throw ConfigError("beta must be non-negative");
  if (dim < 2) throw ConfigError("dim must be at least 2");
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw ConfigError("integrator tolerances must be positive");
  if (!(trace_budget_per_fs >= 0.0)) throw ConfigError("trace budget must be non-negative");
  if (target_fock && (*target_fock < 0 || *target_fock >= dim))
    throw ConfigError("target_fock outside the basis");
  drive.check();
}

ComplexVector loss_rates(const SimulationConfig& config) {
  ComplexVector kl = ComplexVector::Zero(config.dim);
  const bool numeric = config.lamb_shift && !has_trivial_lamb_shift(config.coupling);
  std::optional<LossFunction> lf;
  if (numeric) lf.emplace(config.coupling, config.lamb_grid ? *config.lamb_grid : default_grid(config.coupling, config.omega_a));
  for (int m = 1; m < config.dim; ++m) {
    const double w = transition_frequency(config.omega_a, config.beta, m);
    kl(m) = numeric ? (*lf)(w) : Complex(re_k_l(config.coupling, w), 0.0);
  }
  return kl;
}

RealVector level_energies(const SimulationConfig& config) {
  RealVector e(config.dim);
  for (int n = 0; n < config.dim; ++n) {
    e(n) = config.beta * config.omega_a * n * (n - 1.0);
    if (config.frame == Frame::lab) e(n) += config.omega_a * n;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Liouvillian pieces
//
// In the frame rotating at omega_a, rho_mn picks up exp(i omega_a (m-n) t). Every term of
// the dissipator maps rho_{m+1,n+1} or rho_mn onto rho_mn, i.e. keeps m-n fixed, so it is
// unchanged by the transformation. Only the drive picks up exp(-i omega_a t) on a.

namespace {

struct Generator {
  int dim = 0;
  Eigen::ArrayXXcd lambda;  // diagonal part: -i(E_m - E_n) - (m kl_m + n conj kl_n)
  Eigen::ArrayXXcd feed;    // sqrt((m+1)(n+1)) (kl_{m+1} + conj kl_{n+1}), (dim-1)^2
  ComplexVector sqrt_n;
  DriveEnvelope drive;
  double carrier_offset = 0.0;  // eV, frequency of alpha in the working frame

  explicit Generator(const SimulationConfig& c) : dim(c.dim), drive(c.drive) {
    const ComplexVector kl = loss_rates(c);
    const RealVector e = level_energies(c);
    lambda.resize(dim, dim);
    for (int n = 0; n < dim; ++n)
      for (int m = 0; m < dim; ++m)
        lambda(m, n) = Complex(0.0, -(e(m) - e(n))) - (double(m) * kl(m) + double(n) * std::conj(kl(n)));
    feed.resize(dim - 1, dim - 1);
    for (int n = 0; n + 1 < dim; ++n)
      for (int m = 0; m + 1 < dim; ++m)
        feed(m, n) = std::sqrt((m + 1.0) * (n + 1.0)) * (kl(m + 1) + std::conj(kl(n + 1)));
    sqrt_n.resize(dim);
    for (int n = 0; n < dim; ++n) sqrt_n(n) = std::sqrt(double(n));
    const double carrier = c.drive.carrier ? *c.drive.carrier : c.omega_a;
    carrier_offset = c.frame == Frame::rotating ? carrier - c.omega_a : carrier;
  }

  Complex alpha(double t) const {
    if (!drive.present()) return 0.0;
    const Complex env = drive.envelope(internal_to_fs(t));
    if (env == 0.0) return 0.0;
    return drive.amplitude * env * std::polar(1.0, carrier_offset * t);
  }

  // Everything except lambda: feeding from the level above plus -i[H_drive, rho].
  void slow(const Matrix& rho, double t, Matrix& out) const {
    const int d = dim;
    out.setZero(d, d);
    out.topLeftCorner(d - 1, d - 1).array() = feed * rho.bottomRightCorner(d - 1, d - 1).array();
    const Complex a = alpha(t);
    if (a == 0.0) return;
    const Complex c1 = Complex(0.0, -1.0) * a;
    const Complex c2 = Complex(0.0, -1.0) * std::conj(a);
    const auto s = sqrt_n.tail(d - 1).asDiagonal();
    out.topRows(d - 1).noalias() += c1 * (s * rho.bottomRows(d - 1));
    out.rightCols(d - 1).noalias() -= c1 * (rho.leftCols(d - 1) * s);
    out.bottomRows(d - 1).noalias() += c2 * (s * rho.topRows(d - 1));
    out.leftCols(d - 1).noalias() -= c2 * (rho.rightCols(d - 1) * s);
  }
};

// Dormand-Prince 5(4).
constexpr std::array<double, 7> dp_c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double dp_a[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
constexpr std::array<double, 7> dp_e{71.0 / 57600,  0.0,         -71.0 / 16695, 71.0 / 1920,
                                     -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

// Every exp(delta h lambda) a Lawson step needs, indexed once.
struct DeltaTable {
  std::vector<double> deltas;
  int stage[7]{};
  int coupling[7][6]{};
  int error[7]{};

  DeltaTable() {
    for (int i = 1; i < 7; ++i) {
      stage[i] = index(dp_c[i]);
      for (int j = 0; j < i; ++j) coupling[i][j] = index(dp_c[i] - dp_c[j]);
    }
    for (int i = 0; i < 7; ++i) error[i] = index(1.0 - dp_c[i]);
  }
  int index(double d) {
    for (std::size_t k = 0; k < deltas.size(); ++k)
      if (std::abs(deltas[k] - d) < 1e-14) return static_cast<int>(k);
    deltas.push_back(d);
    return static_cast<int>(deltas.size() - 1);
  }
};

const DeltaTable& delta_table() {
  static const DeltaTable table;
  return table;
}

using ExpSet = std::vector<Eigen::ArrayXXcd>;

// Small LRU of exponential sets keyed by step size. Step sizes are snapped to a
// 2^(k/8) ladder, so most steps reuse a cached set.
class ExpCache {
 public:
  ExpCache(const Eigen::ArrayXXcd& lambda, std::size_t capacity) : lambda_(lambda), capacity_(capacity) {}

  std::shared_ptr<const ExpSet> get(double h) {
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
      if (it->first == h) {
        entries_.splice(entries_.begin(), entries_, it);
        return it->second;
      }
    }
    const auto& table = delta_table();
    auto set = std::make_shared<ExpSet>();
    set->reserve(table.deltas.size());
    for (double d : table.deltas) set->push_back((lambda_ * (d * h)).exp());
    entries_.emplace_front(h, set);
    if (entries_.size() > capacity_) entries_.pop_back();
    return set;
  }

 private:
  const Eigen::ArrayXXcd& lambda_;
  std::size_t capacity_;
  std::list<std::pair<double, std::shared_ptr<const ExpSet>>> entries_;
};

double snap_step(double h) {
  const double k = std::floor(8.0 * std::log2(h));
  return std::exp2(k / 8.0);
}

RealVector diagonal_of(const Matrix& rho) { return rho.diagonal().real(); }

std::string fs_string(double t_fs) {
  std::ostringstream os;
  os.precision(6);
  os << t_fs;
  return os.str();
}

}  // namespace

Matrix dissipator_apply(const DensityMatrix& rho, const ComplexVector& kl) {
  const Eigen::Index d = rho.rows();
  if (rho.cols() != d || kl.size() != d) throw DimensionError("dissipator_apply: size mismatch");
  Matrix out(d, d);
  for (Eigen::Index n = 0; n < d; ++n)
    for (Eigen::Index m = 0; m < d; ++m) {
      Complex v = -(double(m) * kl(m) + double(n) * std::conj(kl(n))) * rho(m, n);
      if (m + 1 < d && n + 1 < d)
        v += std::sqrt((m + 1.0) * (n + 1.0)) * (kl(m + 1) + std::conj(kl(n + 1))) * rho(m + 1, n + 1);
      out(m, n) = v;
    }
  return out;
}

Matrix dissipator_apply(const DensityMatrix& rho, const SimulationConfig& config) {
  if (rho.rows() != config.dim) throw DimensionError("dissipator_apply: state size differs from config.dim");
  return dissipator_apply(rho, loss_rates(config));
}

Matrix liouvillian_rhs(const DensityMatrix& rho, double t_fs, const SimulationConfig& config) {
  config.check();
  if (rho.rows() != config.dim || rho.cols() != config.dim)
    throw DimensionError("liouvillian_rhs: state size differs from config.dim");
  const Generator g(config);
  Matrix out;
  g.slow(rho, fs_to_internal(t_fs), out);
  out.array() += g.lambda * rho.array();
  return out;
}

ObservableRecord make_record(const RealVector& p, std::optional<int> target_fock) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  ObservableRecord r;
  const MeanVar mv = mean_var(p);
  r.mean = mv.mean;
  r.variance = mv.variance;
  // Ratios of round-off sized moments are noise; report the emptied cavity as vacuum.
  if (std::abs(mv.mean) < 1e-9) {
    r.squeezing_db = r.g2 = nan;
    r.fidelity_n0 = target_fock ? (*target_fock < p.size() ? p(*target_fock) : 0.0) : nan;
    r.trace_defect = std::abs(p.sum() - 1.0);
    return r;
  }
  try {
    r.squeezing_db = squeezing_db(p);
  } catch (const UndefinedObservableError&) {
    r.squeezing_db = nan;
  }
  try {
    r.g2 = g2_zero(p);
  } catch (const UndefinedObservableError&) {
    r.g2 = nan;
  }
  r.fidelity_n0 = target_fock ? (*target_fock < p.size() ? p(*target_fock) : 0.0) : nan;
  r.trace_defect = std::abs(p.sum() - 1.0);
  return r;
}

// ---------------------------------------------------------------------------
// Full evolution: integrating-factor (Lawson) Dormand-Prince on rho.
//
// With L = lambda (elementwise, exact) + N (slow), the stage values are
//   W_i = E(c_i) rho_n + h sum_j a_ij E(c_i - c_j) N(W_j),   E(d) = exp(d h lambda),
// and the update is W_7. Only d >= 0 occurs, so nothing overflows.

namespace {

void check_grid(const std::vector<double>& t) {
  if (t.empty()) throw ConfigError("time grid is empty");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw ConfigError("time grid must be strictly increasing");
}

}  // namespace

Trajectory evolve(const DensityMatrix& rho0, const SimulationConfig& config, const std::vector<double>& t_grid_fs,
                  const EvolveOptions& options) {
  config.check();
  check_grid(t_grid_fs);
  if (rho0.rows() != config.dim || rho0.cols() != config.dim)
    throw DimensionError("evolve: initial state is " + std::to_string(rho0.rows()) + "x" +
                         std::to_string(rho0.cols()) + ", config.dim is " + std::to_string(config.dim));

  const Generator gen(config);
  const DeltaTable& table = delta_table();
  const std::size_t cache_size = config.dim > 200 ? 4 : 12;
  ExpCache cache(gen.lambda, cache_size);

  Trajectory traj;
  auto record = [&](double t_fs, const Matrix& rho) {
    const RealVector p = diagonal_of(rho);
    traj.times_fs.push_back(t_fs);
    traj.records.push_back(make_record(p, config.target_fock));
    traj.populations.push_back(p);
    if (options.store_states) traj.states.push_back(rho);
  };

  Matrix rho = rho0;
  record(t_grid_fs.front(), rho);
  if (t_grid_fs.size() == 1) return traj;

  const double trace0 = rho0.trace().real();
  const double t_begin = fs_to_internal(t_grid_fs.front());
  double t = t_begin;

  // Drive support edges become breakpoints so a pulse can never be stepped over.
  std::vector<double> stops;
  for (double tf : t_grid_fs) stops.push_back(fs_to_internal(tf));
  double drive_h_cap = std::numeric_limits<double>::infinity();
  if (config.drive.present()) {
    for (double edge : {config.drive.start_fs(), config.drive.end_fs()}) {
      const double e = fs_to_internal(edge);
      if (e > stops.front() && e < stops.back()) stops.push_back(e);
    }
    std::sort(stops.begin(), stops.end());
    const double width = config.drive.kind == DriveEnvelope::Kind::gaussian
                             ? config.drive.duration_fs
                             : (config.drive.end_fs() - config.drive.start_fs());
    drive_h_cap = fs_to_internal(width) / 20.0;
  }
  auto in_drive = [&](double tt) {
    if (!config.drive.present()) return false;
    const double tf = internal_to_fs(tt);
    return tf >= config.drive.start_fs() && tf < config.drive.end_fs();
  };

  std::array<Matrix, 7> k;
  gen.slow(rho, t, k[0]);

  // Initial step from the size of the slow part relative to the state.
  double h_prop;
  {
    const Eigen::ArrayXXd sc = config.abs_tol + config.rel_tol * rho.cwiseAbs().array();
    const double d0 = (rho.cwiseAbs().array() / sc).maxCoeff();
    const double d1 = (k[0].cwiseAbs().array() / sc).maxCoeff();
    h_prop = d1 > 0.0 ? 0.01 * d0 / d1 : stops.back() - t;
    h_prop = std::min(h_prop, stops.back() - t);
    if (in_drive(t)) h_prop = std::min(h_prop, drive_h_cap);
  }

  Matrix w, err, rho_new;
  std::size_t grid_index = 1;
  constexpr std::size_t max_steps = 200'000'000;
  std::size_t steps = 0;

  for (std::size_t s = 1; s < stops.size(); ++s) {
    const double target = stops[s];
    if (in_drive(t)) h_prop = std::min(h_prop, drive_h_cap);
    while (t < target) {
      if (++steps > max_steps) throw IntegratorError("evolve: step budget exhausted at t=" + fs_string(internal_to_fs(t)) + " fs");
      double h = snap_step(h_prop);
      bool last = false;
      if (t + h >= target * (1.0 - 1e-15) || target - (t + h) < 1e-3 * h) {
        h = target - t;
        last = true;
      }
      if (!(h > 1e-14 * std::max(1.0, std::abs(t))))
        throw IntegratorError("evolve: step size underflow at t=" + fs_string(internal_to_fs(t)) +
                              " fs (stiffness beyond the integrator, try a larger abs_tol)");
      const auto ex = cache.get(h);
      const auto& E = *ex;

      for (int i = 1; i < 7; ++i) {
        w = (E[table.stage[i]] * rho.array()).matrix();
        for (int j = 0; j < i; ++j)
          if (dp_a[i][j] != 0.0) w.array() += (h * dp_a[i][j]) * E[table.coupling[i][j]] * k[j].array();
        gen.slow(w, t + dp_c[i] * h, k[i]);
        if (i == 6) rho_new = w;
      }
      err.setZero(config.dim, config.dim);
      for (int i = 0; i < 7; ++i)
        if (dp_e[i] != 0.0) err.array() += (h * dp_e[i]) * E[table.error[i]] * k[i].array();

      const Eigen::ArrayXXd sc =
          config.abs_tol + config.rel_tol * rho.cwiseAbs().array().max(rho_new.cwiseAbs().array());
      const double en = (err.cwiseAbs().array() / sc).maxCoeff();
      if (!std::isfinite(en))
        throw IntegratorError("evolve: non-finite state at t=" + fs_string(internal_to_fs(t)) + " fs");

      if (en <= 1.0) {
        ++traj.accepted_steps;
        t = last ? target : t + h;
        rho.swap(rho_new);
        k[0].swap(k[6]);
        const double grow = en > 0.0 ? std::min(5.0, 0.9 * std::pow(en, -0.2)) : 5.0;
        // A step shortened to land on a stop says little about the step the solution allows.
        h_prop = last ? std::max(h_prop, h * grow) : h * grow;
      } else {
        ++traj.rejected_steps;
        h_prop = h * std::max(0.2, 0.9 * std::pow(en, -0.2));
      }
      if (in_drive(t)) h_prop = std::min(h_prop, drive_h_cap);
    }

    while (grid_index < t_grid_fs.size() && std::abs(fs_to_internal(t_grid_fs[grid_index]) - t) <= 1e-12 * std::max(1.0, std::abs(t))) {
      const double tf = t_grid_fs[grid_index];
      const double drift = std::abs(rho.trace().real() - trace0);
      const double allowed = 1e-9 + config.trace_budget_per_fs * (tf - t_grid_fs.front());
      if (drift > allowed) {
        std::ostringstream os;
        os << "evolve: trace drift " << drift << " exceeds budget " << allowed << " at t=" << tf << " fs";
        throw AccuracyError(os.str());
      }
      record(tf, rho);
      ++grid_index;
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Explicit Dormand-Prince for small real systems (diagonal chain, moment closure).

namespace {

using RealRhs = std::function<void(double, const RealVector&, RealVector&)>;

void dp45_real(RealVector& y, double t0, double t1, double& h_prop, const RealRhs& f, double rtol, double atol,
               std::size_t& accepted, std::size_t& rejected) {
  std::array<RealVector, 7> k;
  RealVector w, y_new, e;
  double t = t0;
  f(t, y, k[0]);
  if (!(h_prop > 0.0)) {
    const double d1 = (k[0].array().abs() / (atol + rtol * y.array().abs())).maxCoeff();
    h_prop = d1 > 0.0 ? 0.01 / d1 : t1 - t0;
  }
  std::size_t guard = 0;
  while (t < t1) {
    if (++guard > 500'000'000) throw IntegratorError("explicit integrator: step budget exhausted");
    double h = h_prop;
    bool last = false;
    if (t + h >= t1 || t1 - (t + h) < 1e-3 * h) {
      h = t1 - t;
      last = true;
    }
    if (!(h > 1e-14 * std::max(1.0, std::abs(t))))
      throw IntegratorError("explicit integrator: step size underflow at t=" + fs_string(internal_to_fs(t)) + " fs");
    for (int i = 1; i < 7; ++i) {
      w = y;
      for (int j = 0; j < i; ++j)
        if (dp_a[i][j] != 0.0) w.noalias() += (h * dp_a[i][j]) * k[j];
      f(t + dp_c[i] * h, w, k[i]);
      if (i == 6) y_new = w;
    }
    e = RealVector::Zero(y.size());
    for (int i = 0; i < 7; ++i)
      if (dp_e[i] != 0.0) e.noalias() += (h * dp_e[i]) * k[i];
    const double en =
        (e.array().abs() / (atol + rtol * y.array().abs().max(y_new.array().abs()))).maxCoeff();
    if (!std::isfinite(en)) throw IntegratorError("explicit integrator: non-finite state");
    if (en <= 1.0) {
      ++accepted;
      t = last ? t1 : t + h;
      y.swap(y_new);
      k[0].swap(k[6]);
      const double grow = en > 0.0 ? std::min(5.0, 0.9 * std::pow(en, -0.2)) : 5.0;
      h_prop = last ? std::max(h_prop, h * grow) : h * grow;
    } else {
      ++rejected;
      h_prop = h * std::max(0.2, 0.9 * std::pow(en, -0.2));
    }
  }
}

RealVector death_rates(const SimulationConfig& config) {
  RealVector r = RealVector::Zero(config.dim);
  for (int n = 1; n < config.dim; ++n) r(n) = 2.0 * n * kappa_of_n(config.coupling, config.omega_a, config.beta, n);
  return r;
}

}  // namespace

Trajectory evolve_diagonal(const RealVector& p0, const SimulationConfig& config, const std::vector<double>& t_grid_fs) {
  config.check();
  check_grid(t_grid_fs);
  if (config.drive.present())
    throw UnsupportedModelError("evolve_diagonal: the diagonal decouples only without a drive");
  if (p0.size() != config.dim)
    throw DimensionError("evolve_diagonal: distribution has " + std::to_string(p0.size()) + " entries, config.dim is " +
                         std::to_string(config.dim));
  const RealVector r = death_rates(config);
  const Eigen::Index d = r.size();
  RealRhs f = [&r, d](double, const RealVector& p, RealVector& dp) {
    dp.resize(d);
    dp.array() = -r.array() * p.array();
    dp.head(d - 1).array() += r.tail(d - 1).array() * p.tail(d - 1).array();
  };

  Trajectory traj;
  RealVector p = p0;
  auto record = [&](double tf) {
    traj.times_fs.push_back(tf);
    traj.records.push_back(make_record(p, config.target_fock));
    traj.populations.push_back(p);
  };
  record(t_grid_fs.front());
  double h = 0.0;
  for (std::size_t i = 1; i < t_grid_fs.size(); ++i) {
    dp45_real(p, fs_to_internal(t_grid_fs[i - 1]), fs_to_internal(t_grid_fs[i]), h, f, config.rel_tol,
              config.abs_tol, traj.accepted_steps, traj.rejected_steps);
    record(t_grid_fs[i]);
  }
  return traj;
}

bool ClosureTrajectory::any_warning() const {
  return std::any_of(warning.begin(), warning.end(), [](bool w) { return w; });
}

ClosureTrajectory moment_closure_evolve(double mean0, double var0, const SimulationConfig& config,
                                        const std::vector<double>& t_grid_fs) {
  if (!(config.omega_a > 0.0) || config.beta < 0.0) throw ConfigError("moment closure: invalid resonator");
  if (config.drive.present()) throw UnsupportedModelError("moment closure: only the undriven ringdown is supported");
  if (!(mean0 > 0.0) || var0 < 0.0) throw ConfigError("moment closure: need mean > 0 and variance >= 0");
  check_grid(t_grid_fs);

  auto rate = [&config](double n) {
    return 2.0 * n * kappa_of_n(config.coupling, config.omega_a, config.beta, n);
  };
  // Expanding r(n) to second order about the mean m with a vanishing third cumulant:
  //   <r> = r(m) + r''(m) V / 2,   <r (n - m)> = r'(m) V.
  // From d<f>/dt = <r_n (f(n-1) - f(n))> with f = n and f = n^2:
  //   dm/dt = -<r>,   dV/dt = <r> - 2 <r (n - m)>.
  RealRhs f = [&rate](double, const RealVector& y, RealVector& dy) {
    const double m = std::max(y(0), 0.0);
    const double v = y(1);
    const double h = std::max(1.0, 1e-3 * m);
    // r(n) is smooth through n = 0, so the stencil may reach below it.
    const double r0 = rate(m), rp = rate(m + h), rm = rate(m - h);
    const double d1 = (rp - rm) / (2.0 * h);
    const double d2 = (rp - 2.0 * r0 + rm) / (h * h);
    const double mean_rate = std::max(r0 + 0.5 * d2 * v, 0.0);
    dy.resize(2);
    dy(0) = -mean_rate;
    dy(1) = mean_rate - 2.0 * d1 * v;
  };

  ClosureTrajectory out;
  RealVector y(2);
  y << mean0, var0;
  auto record = [&](double tf) {
    out.times_fs.push_back(tf);
    out.mean.push_back(y(0));
    out.variance.push_back(y(1));
    out.warning.push_back(y(1) < 0.0 || y(1) > 10.0 * y(0));
  };
  record(t_grid_fs.front());
  double h = 0.0;
  std::size_t acc = 0, rej = 0;
  for (std::size_t i = 1; i < t_grid_fs.size(); ++i) {
    dp45_real(y, fs_to_internal(t_grid_fs[i - 1]), fs_to_internal(t_grid_fs[i]), h, f, config.rel_tol,
              config.abs_tol, acc, rej);
    record(t_grid_fs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pump and ringdown

namespace {

void validate_pulse(const SimulationConfig& config) {
  if (config.drive.kind != DriveEnvelope::Kind::gaussian)
    throw ConfigError("pump_and_ringdown: pulse mode needs a gaussian drive");
  config.drive.check();
  const double width = fs_to_internal(config.drive.duration_fs);
  double max_kappa = 0.0;
  for (int n = 1; n < config.dim; ++n)
    max_kappa = std::max(max_kappa, kappa_of_n(config.coupling, config.omega_a, config.beta, n));
  if (max_kappa > 0.0 && !(width < 1.0 / max_kappa))
    throw ConfigError("pump_and_ringdown: pulse of " + fs_string(config.drive.duration_fs) +
                      " fs is not shorter than the fastest loss time " + fs_string(internal_to_fs(1.0 / max_kappa)) + " fs");
  const double kerr = config.beta * config.omega_a * config.dim;
  if (kerr > 0.0 && !(width < 1.0 / kerr))
    throw ConfigError("pump_and_ringdown: pulse of " + fs_string(config.drive.duration_fs) +
                      " fs is not shorter than the Kerr time " + fs_string(internal_to_fs(1.0 / kerr)) + " fs");
}

double post_pulse_mean(SimulationConfig config, Complex amplitude) {
  config.drive.amplitude = amplitude;
  const Trajectory t = evolve(fock_state(0, config.dim), config, {config.drive.start_fs(), config.drive.end_fs()});
  return t.records.back().mean;
}

}  // namespace

Complex calibrate_pulse(const SimulationConfig& config, double target_mean) {
  config.check();
  validate_pulse(config);
  if (target_mean < 0.0) throw ConfigError("pump_and_ringdown: target mean must be non-negative");
  if (target_mean == 0.0) return 0.0;
  const Complex unit = std::abs(config.drive.amplitude) > 0.0 ? config.drive.amplitude / std::abs(config.drive.amplitude)
                                                              : Complex(1.0, 0.0);
  // A resonant Gaussian displaces the vacuum by |alpha| * 1.0645 FWHM in the linear regime.
  const double fwhm = fs_to_internal(config.drive.duration_fs);
  const double root = std::sqrt(target_mean);
  auto g = [&](double x) { return std::sqrt(std::max(post_pulse_mean(config, x * unit), 0.0)) - root; };

  double x0 = root / (1.0645 * fwhm);
  double g0 = g(x0);
  double x1 = x0 * root / std::max(g0 + root, 1e-3 * root);
  for (int it = 0; it < 40; ++it) {
    const double g1 = g(x1);
    const double mean = (g1 + root) * (g1 + root);
    if (std::abs(mean / target_mean - 1.0) < 1e-3) return x1 * unit;
    if (g1 == g0) break;
    const double x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
    x0 = x1;
    g0 = g1;
    x1 = x2 > 0.0 ? x2 : 0.5 * x1;
  }
  throw AccuracyError("pump_and_ringdown: pulse calibration did not reach the target mean");
}

Trajectory pump_and_ringdown(const SimulationConfig& config, const PumpOptions& options) {
  config.check();
  if (options.samples < 2) throw ConfigError("pump_and_ringdown: need at least two samples");
  if (!(options.horizon_fs > 0.0)) throw ConfigError("pump_and_ringdown: horizon must be positive");
  const std::vector<double> ring = ringdown_grid(options.horizon_fs, options.samples, options.log_spacing);

  if (options.mode == PumpOptions::Mode::preload) {
    SimulationConfig free = config;
    free.drive = DriveEnvelope{};
    return evolve(coherent_state(options.target_mean, options.phase, config.dim), free, ring, options.evolve);
  }

  SimulationConfig driven = config;
  driven.drive.amplitude = calibrate_pulse(config, options.target_mean);
  std::vector<double> grid{driven.drive.start_fs()};
  const double end = driven.drive.end_fs();
  for (double t : ring) grid.push_back(end + t);
  return evolve(fock_state(0, config.dim), driven, grid, options.evolve);
}

std::vector<double> linear_grid(double t0_fs, double t1_fs, int n) {
  if (n < 2 || !(t1_fs > t0_fs)) throw ConfigError("linear_grid: need n >= 2 and t1 > t0");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = t0_fs + (t1_fs - t0_fs) * i / (n - 1);
  g.back() = t1_fs;
  return g;
}

std::vector<double> ringdown_grid(double horizon_fs, int n, bool log_spacing) {
  if (!log_spacing || n < 3) return linear_grid(0.0, horizon_fs, n);
  std::vector<double> g{0.0};
  const double lo = std::log(horizon_fs * 1e-6), hi = std::log(horizon_fs);
  for (int i = 0; i < n - 1; ++i) g.push_back(std::exp(lo + (hi - lo) * i / (n - 2)));
  g.back() = horizon_fs;
  return g;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t_fs,mean_n,var_n,squeezing_db,g2,fidelity_n0,trace_defect\n";
  for (std::size_t i = 0; i < traj.times_fs.size(); ++i) {
    const auto& r = traj.records[i];
    out << fmt_num(traj.times_fs[i]) << ',' << fmt_num(r.mean) << ',' << fmt_num(r.variance) << ','
        << fmt_num(r.squeezing_db) << ',' << fmt_num(r.g2) << ',' << fmt_num(r.fidelity_n0) << ','
        << fmt_num(r.trace_defect) << '\n';
  }
}

void write_snapshots(const std::string& directory, const Trajectory& traj) {
  std::filesystem::create_directories(directory);
  for (std::size_t i = 0; i < traj.states.size() && i < traj.times_fs.size(); ++i) {
    const auto path = std::filesystem::path(directory) / ("state_t" + fmt_num(traj.times_fs[i]) + ".dat");
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    const auto& rho = traj.states[i];
    for (Eigen::Index m = 0; m < rho.rows(); ++m) {
      for (Eigen::Index n = 0; n < rho.cols(); ++n) {
        if (n) out << ' ';
        out << fmt_exact(rho(m, n).real()) << ' ' << fmt_exact(rho(m, n).imag());
      }
      out << '\n';
    }
  }
}

}  // namespace kerrbic
