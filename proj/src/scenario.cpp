#include "kerrbic/scenario.hpp"

#include "kerrbic/csv.hpp"
#include "kerrbic/design.hpp"
#include "kerrbic/fockspace.hpp"
#include "kerrbic/observables.hpp"
#include "kerrbic/pinem.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

namespace kerrbic::scenario {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Read-only view of one JSON object that remembers which keys were consumed, so
// typos surface as "unknown field" instead of being silently ignored.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string at = key.empty() ? (path_.empty() ? std::string("<root>") : path_) : where(key);
    throw ConfigError("field '" + at + "': " + what);
  }

  const json& raw(const std::string& key) const {
    if (!j_.contains(key)) fail(key, "missing");
    used_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) const {
    const json& v = raw(key);
    if (!v.is_number()) fail(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "must be finite");
    return d;
  }
  double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  int integer(const std::string& key) const {
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    return v.get<int>();
  }
  int integer_or(const std::string& key, int fallback) const { return has(key) ? integer(key) : fallback; }

  bool boolean_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) const {
    const json& v = raw(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }
  std::string string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  Node child(const std::string& key) const { return Node(raw(key), where(key)); }

  /// A rate given either as "<name>_over_wa" (multiplied by omega_a) or "<name>_eV".
  std::optional<double> rate(const std::string& name, double omega_a) const {
    const bool rel = has(name + "_over_wa"), abs = has(name + "_eV");
    if (rel && abs) fail(name + "_eV", "give either " + name + "_over_wa or " + name + "_eV, not both");
    if (rel) return number(name + "_over_wa") * omega_a;
    if (abs) return number(name + "_eV");
    return std::nullopt;
  }
  double rate_required(const std::string& name, double omega_a) const {
    auto r = rate(name, omega_a);
    if (!r) fail(name + "_over_wa", "missing (or give " + name + "_eV)");
    return *r;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(it.key(), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  mutable std::set<std::string> used_;
};

struct Resonator {
  double omega_a = 1.0;
  double beta = 0.0;
};

Resonator read_resonator(const Node& root) {
  const Node r = root.child("resonator");
  Resonator res;
  res.omega_a = r.number("omega_a_eV");
  res.beta = r.number("beta");
  r.finish();
  if (!(res.omega_a > 0.0)) r.fail("omega_a_eV", "must be positive");
  if (res.beta < 0.0) r.fail("beta", "must be non-negative");
  return res;
}

// Detuning of the loss minimum from omega_a, given as n0 or as a detuning.
std::optional<double> read_detuning(const Node& c, const Resonator& res) {
  const int given = int(c.has("n0")) + int(c.has("delta0_over_wa")) + int(c.has("delta0_eV"));
  if (given > 1) c.fail("n0", "give only one of n0, delta0_over_wa, delta0_eV");
  if (c.has("n0")) {
    if (!(res.beta > 0.0)) c.fail("n0", "needs beta > 0");
    return detuning_for_fock(c.number("n0"), res.omega_a, res.beta);
  }
  if (c.has("delta0_over_wa")) return c.number("delta0_over_wa") * res.omega_a;
  if (c.has("delta0_eV")) return c.number("delta0_eV");
  return std::nullopt;
}

void check_rate(const Node& c, const std::string& name, double v) {
  if (v < 0.0) c.fail(name, "rates must be non-negative");
}

CouplingModel read_coupling(const Node& root, const Resonator& res) {
  const Node c = root.child("coupling");
  const std::string model = c.string("model");
  CouplingModel out;
  if (model == "constant") {
    const double k = c.rate_required("kappa", res.omega_a);
    check_rate(c, "kappa_over_wa", k);
    out = ConstantCoupling{k};
  } else if (model == "quadratic") {
    QuadraticLoss q;
    const auto d = read_detuning(c, res);
    if (!d) c.fail("n0", "quadratic model needs n0, delta0_over_wa or delta0_eV");
    q.omega0 = res.omega_a + *d;
    const bool direct = c.has("c2_times_wa") || c.has("c2_per_eV");
    const bool derived = c.has("kappa_over_wa") || c.has("kappa_eV");
    if (direct == derived) c.fail("c2_times_wa", "give the curvature (c2_times_wa or c2_per_eV) or kappa and gamma");
    if (direct) {
      if (c.has("c2_times_wa") && c.has("c2_per_eV")) c.fail("c2_per_eV", "give only one curvature");
      q.c2 = c.has("c2_times_wa") ? c.number("c2_times_wa") / res.omega_a : c.number("c2_per_eV");
    } else {
      // Small-phase expansion of the terminated waveguide: 2k(1 - cos(x/gamma)) ~ (k/gamma^2) x^2.
      const double k = c.rate_required("kappa", res.omega_a);
      const double g = c.rate_required("gamma", res.omega_a);
      if (!(g > 0.0)) c.fail("gamma_over_wa", "must be positive");
      q.c2 = k / (g * g);
    }
    if (q.c2 < 0.0) c.fail("c2_times_wa", "curvature must be non-negative");
    q.kappa_i = c.rate("kappa_i", res.omega_a).value_or(0.0);
    check_rate(c, "kappa_i_over_wa", q.kappa_i);
    out = q;
  } else if (model == "terminated_waveguide") {
    TerminatedWaveguide t;
    t.kappa = c.rate_required("kappa", res.omega_a);
    t.gamma = c.rate_required("gamma", res.omega_a);
    if (!(t.gamma > 0.0)) c.fail("gamma_over_wa", "must be positive");
    const auto d = read_detuning(c, res);
    if (d && c.has("theta")) c.fail("theta", "give theta or the null position, not both");
    if (d) {
      // Place the interference null at omega_a + delta0.
      const double phase = (res.omega_a + *d) / t.gamma;
      t.theta = 2.0 * std::numbers::pi * std::ceil(phase / (2.0 * std::numbers::pi)) - phase;
    } else {
      t.theta = c.number_or("theta", 0.0);
    }
    t.kappa_i = c.rate("kappa_i", res.omega_a).value_or(0.0);
    check_rate(c, "kappa_over_wa", t.kappa);
    check_rate(c, "kappa_i_over_wa", t.kappa_i);
    out = t;
  } else if (model == "fano") {
    FanoTwoResonator f;
    f.kappa = c.rate_required("kappa", res.omega_a);
    f.gamma = c.rate_required("gamma", res.omega_a);
    if (!(f.gamma > 0.0)) c.fail("gamma_over_wa", "must be positive");
    const auto d = read_detuning(c, res);
    if (d && c.has("omega_d_eV")) c.fail("omega_d_eV", "give omega_d_eV or the null position, not both");
    f.omega_d = d ? res.omega_a + *d : c.number("omega_d_eV");
    f.kappa_i = c.rate("kappa_i", res.omega_a).value_or(0.0);
    check_rate(c, "kappa_over_wa", f.kappa);
    check_rate(c, "kappa_i_over_wa", f.kappa_i);
    out = f;
  } else if (model == "tabulated") {
    out = load_tabulated(c.string("file"), c.rate("kappa_i", res.omega_a).value_or(0.0));
  } else {
    c.fail("model", "unknown model '" + model + "' (constant, quadratic, terminated_waveguide, fano, tabulated)");
  }
  c.finish();
  return out;
}

// n0 implied by the coupling block, when it names one.
std::optional<double> coupling_n0(const json& doc, const Resonator& res) {
  const json& c = doc.at("coupling");
  if (c.contains("n0") && c.at("n0").is_number()) return c.at("n0").get<double>();
  if (!(res.beta > 0.0)) return std::nullopt;
  if (c.contains("delta0_over_wa") && c.at("delta0_over_wa").is_number())
    return stable_photon_number({res.omega_a, res.beta, c.at("delta0_over_wa").get<double>() * res.omega_a, 0, 0});
  if (c.contains("delta0_eV") && c.at("delta0_eV").is_number())
    return stable_photon_number({res.omega_a, res.beta, c.at("delta0_eV").get<double>(), 0, 0});
  return std::nullopt;
}

json state_from_string(const std::string& s, const std::string& where) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  auto num = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(parts.at(i), &used);
      if (used != parts[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("field '" + where + "': cannot read state '" + s + "'");
    }
  };
  if (parts.empty()) throw ConfigError("field '" + where + "': empty state");
  if (parts[0] == "vacuum" && parts.size() == 1) return {{"kind", "vacuum"}};
  if (parts[0] == "fock" && parts.size() == 2) return {{"kind", "fock"}, {"n", static_cast<int>(num(1))}};
  if (parts[0] == "coherent" && (parts.size() == 2 || parts.size() == 3))
    return {{"kind", "coherent"}, {"mean", num(1)}, {"phase", parts.size() == 3 ? num(2) : 0.0}};
  if (parts[0] == "poisson" && parts.size() == 2) return {{"kind", "poisson"}, {"mean", num(1)}};
  throw ConfigError("field '" + where + "': unknown state '" + s +
                    "' (vacuum, fock:n, coherent:mean[:phase], poisson:mean)");
}

json normalise_state(const json& j, const std::string& where) {
  if (j.is_string()) return state_from_string(j.get<std::string>(), where);
  return j;
}

struct StateSpec {
  std::string kind;
  int n = 0;
  double mean = 0.0;
  double phase = 0.0;
};

StateSpec read_state(const json& raw, const std::string& where) {
  const json j = normalise_state(raw, where);
  const Node s(j, where);
  StateSpec st;
  st.kind = s.string("kind");
  if (st.kind == "fock") {
    st.n = s.integer("n");
    if (st.n < 0) s.fail("n", "must be non-negative");
  } else if (st.kind == "coherent" || st.kind == "poisson") {
    st.mean = s.number("mean");
    if (st.mean < 0.0) s.fail("mean", "must be non-negative");
    if (st.kind == "coherent") st.phase = s.number_or("phase", 0.0);
  } else if (st.kind != "vacuum") {
    s.fail("kind", "unknown state kind '" + st.kind + "' (vacuum, fock, coherent, poisson)");
  }
  s.finish();
  return st;
}

std::string describe(const StateSpec& s) {
  if (s.kind == "fock") return "fock:" + std::to_string(s.n);
  if (s.kind == "coherent") return "coherent:" + fmt_num(s.mean) + (s.phase != 0.0 ? ":" + fmt_num(s.phase) : "");
  if (s.kind == "poisson") return "poisson:" + fmt_num(s.mean);
  return "vacuum";
}

int auto_dim(const StateSpec& s) {
  if (s.kind == "fock") return s.n + 2;
  if (s.kind == "vacuum") return 2;
  return std::max(2, truncation_dim(s.mean, 1e-10));
}

DensityMatrix make_state(const StateSpec& s, int dim) {
  if (s.kind == "fock") return fock_state(s.n, dim);
  if (s.kind == "vacuum") return fock_state(0, dim);
  if (s.kind == "coherent") return coherent_state(s.mean, s.phase, dim);
  const int need = truncation_dim(s.mean, 1e-10);
  if (need > dim)
    throw TruncationError("poisson state of mean " + fmt_num(s.mean) + " needs dim >= " + std::to_string(need), need);
  return diagonal_state(poisson_distribution(s.mean, dim));
}

std::vector<double> read_time(const Node& root, bool& log_spacing, bool allow_explicit) {
  const Node t = root.child("time");
  std::vector<double> grid;
  if (t.has("times_fs")) {
    if (!allow_explicit) t.fail("times_fs", "this task takes horizon_fs, samples and spacing");
    const json& v = t.raw("times_fs");
    if (!v.is_array() || v.size() < 1) t.fail("times_fs", "expected a non-empty array");
    for (const auto& x : v) {
      if (!x.is_number()) t.fail("times_fs", "expected numbers");
      grid.push_back(x.get<double>());
    }
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1])) t.fail("times_fs", "must be strictly increasing");
  } else {
    const double horizon = t.number("horizon_fs");
    if (!(horizon > 0.0)) t.fail("horizon_fs", "must be positive");
    const int samples = t.integer_or("samples", 201);
    if (samples < 2) t.fail("samples", "must be at least 2");
    const std::string spacing = t.string_or("spacing", "log");
    if (spacing != "log" && spacing != "linear") t.fail("spacing", "expected 'log' or 'linear'");
    log_spacing = spacing == "log";
    grid = ringdown_grid(horizon, samples, log_spacing);
  }
  t.finish();
  return grid;
}

DriveEnvelope read_drive(const Node& root) {
  if (!root.has("drive")) return {};
  const Node d = root.child("drive");
  DriveEnvelope e;
  const std::string kind = d.string("kind");
  if (kind == "none") {
    d.finish();
    return e;
  }
  auto complex_of = [&](const std::string& key) {
    const json& v = d.raw(key);
    if (v.is_number()) return Complex(v.get<double>(), 0.0);
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
      return Complex(v[0].get<double>(), v[1].get<double>());
    d.fail(key, "expected a number or [re, im]");
  };
  if (kind == "gaussian") {
    e.kind = DriveEnvelope::Kind::gaussian;
    e.amplitude = d.has("amplitude_eV") ? complex_of("amplitude_eV") : Complex(1.0, 0.0);
    e.center_fs = d.number("center_fs");
    e.duration_fs = d.number("fwhm_fs");
    if (!(e.duration_fs > 0.0)) d.fail("fwhm_fs", "must be positive");
  } else if (kind == "sampled") {
    e.kind = DriveEnvelope::Kind::sampled;
    e.amplitude = d.has("amplitude_eV") ? complex_of("amplitude_eV") : Complex(1.0, 0.0);
    const json& ts = d.raw("times_fs");
    const json& vs = d.raw("values");
    if (!ts.is_array() || !vs.is_array() || ts.size() != vs.size() || ts.size() < 2)
      d.fail("values", "times_fs and values must be arrays of equal length >= 2");
    for (std::size_t i = 0; i < ts.size(); ++i) {
      e.sample_times_fs.push_back(ts[i].get<double>());
      const json& v = vs[i];
      e.samples.push_back(v.is_array() ? Complex(v[0].get<double>(), v[1].get<double>()) : Complex(v.get<double>(), 0.0));
    }
  } else {
    d.fail("kind", "unknown drive kind '" + kind + "' (none, gaussian, sampled)");
  }
  if (d.has("carrier_eV")) e.carrier = d.number("carrier_eV");
  d.finish();
  try {
    e.check();
  } catch (const ConfigError& err) {
    d.fail("", err.what());
  }
  return e;
}

// ---------------------------------------------------------------------------
// Parsed form of one sweep point.

struct HusimiSpec {
  double radius = 8.0;
  int count = 81;
  std::vector<double> times_fs;
};

struct Plan {
  std::string task;
  Resonator res;
  SimulationConfig config;
  std::optional<StateSpec> initial;
  std::vector<double> grid;
  bool log_spacing = true;
  bool populations = false;
  bool snapshots = false;
  std::optional<HusimiSpec> husimi;
  PumpOptions pump;
  double closure_mean0 = 0.0, closure_var0 = 0.0, closure_stop = 0.0;
  int n_max = 0;
  Complex g{0.0, 0.0};
  std::optional<int> k_max;
  std::vector<StateSpec> pinem_states;
  DesignPoint design;
  ClassifyThresholds thresholds;
};

const std::set<std::string> tasks{"evolve", "evolve_diagonal", "pump_ringdown", "closure", "loss_curve", "pinem",
                                  "design"};

Plan make_plan(const json& doc) {
  const Node root(doc, "");
  Plan p;
  if (root.integer("schema_version") != schema_version)
    root.fail("schema_version", "unsupported version (this build reads " + std::to_string(schema_version) + ")");
  root.string("name");
  root.string_or("description", "");
  if (root.has("sweep")) root.raw("sweep");  // validated separately
  p.task = root.string("task");
  if (!tasks.count(p.task))
    root.fail("task", "unknown task '" + p.task +
                          "' (evolve, evolve_diagonal, pump_ringdown, closure, loss_curve, pinem, design)");

  const bool needs_resonator = p.task != "pinem";
  if (needs_resonator) {
    p.res = read_resonator(root);
    p.config.omega_a = p.res.omega_a;
    p.config.beta = p.res.beta;
    p.config.coupling = read_coupling(root, p.res);
    p.config.drive = read_drive(root);
    p.config.frame = root.string_or("frame", "rotating") == "lab" ? Frame::lab : Frame::rotating;
    if (root.has("frame") && doc.at("frame") != "lab" && doc.at("frame") != "rotating")
      root.fail("frame", "expected 'rotating' or 'lab'");
    p.config.lamb_shift = root.boolean_or("lamb_shift", true);
    if (root.has("tolerances")) {
      const Node t = root.child("tolerances");
      p.config.rel_tol = t.number_or("rel", p.config.rel_tol);
      p.config.abs_tol = t.number_or("abs", p.config.abs_tol);
      p.config.trace_budget_per_fs = t.number_or("trace_budget_per_fs", p.config.trace_budget_per_fs);
      t.finish();
    }
    if (root.has("target_fock")) {
      const json& tf = root.raw("target_fock");
      if (tf.is_string() && tf.get<std::string>() == "auto") {
        const auto n0 = coupling_n0(doc, p.res);
        if (!n0) root.fail("target_fock", "'auto' needs n0 or a detuning in the coupling block");
        p.config.target_fock = static_cast<int>(std::lround(*n0));
      } else if (tf.is_number_integer()) {
        p.config.target_fock = tf.get<int>();
      } else {
        root.fail("target_fock", "expected an integer or \"auto\"");
      }
    }
  }

  const bool dynamics = p.task == "evolve" || p.task == "evolve_diagonal" || p.task == "pump_ringdown";
  if (dynamics || p.task == "closure") p.grid = read_time(root, p.log_spacing, p.task != "pump_ringdown");

  if (p.task == "evolve" || p.task == "evolve_diagonal") {
    p.initial = read_state(root.raw("initial_state"), "initial_state");
    if (p.task == "evolve_diagonal" && p.initial->kind == "coherent" && p.initial->phase != 0.0)
      root.fail("initial_state", "the diagonal path ignores phases; use a poisson state");
  }
  if (p.task == "pump_ringdown") {
    const Node pu = root.child("pump");
    const std::string mode = pu.string_or("mode", "preload");
    if (mode != "preload" && mode != "pulse") pu.fail("mode", "expected 'preload' or 'pulse'");
    p.pump.mode = mode == "pulse" ? PumpOptions::Mode::pulse : PumpOptions::Mode::preload;
    p.pump.target_mean = pu.number("target_mean");
    if (p.pump.target_mean < 0.0) pu.fail("target_mean", "must be non-negative");
    p.pump.phase = pu.number_or("phase", 0.0);
    pu.finish();
    if (p.pump.mode == PumpOptions::Mode::pulse && p.config.drive.kind != DriveEnvelope::Kind::gaussian)
      root.fail("drive", "pulse mode needs a gaussian drive");
    p.pump.horizon_fs = p.grid.back();
  } else if (p.config.drive.present() && p.task != "evolve") {
    root.fail("drive", "only evolve and pump_ringdown accept a drive");
  }

  if (dynamics) {
    int dim = 0;
    if (root.has("dim") && root.raw("dim").is_number_integer()) {
      dim = root.integer("dim");
    } else {
      if (root.has("dim") && root.raw("dim") != "auto") root.fail("dim", "expected an integer or \"auto\"");
      if (p.initial) dim = auto_dim(*p.initial);
      else dim = truncation_dim(p.pump.target_mean, 1e-10) + (p.pump.mode == PumpOptions::Mode::pulse ? 5 : 0);
      if (p.config.target_fock) dim = std::max(dim, *p.config.target_fock + 2);
    }
    if (dim < 2) root.fail("dim", "must be at least 2");
    p.config.dim = dim;
    try {
      p.config.check();
    } catch (const ConfigError& e) {
      root.fail("", e.what());
    }
    if (root.has("outputs")) {
      const Node o = root.child("outputs");
      p.populations = o.boolean_or("populations", false);
      p.snapshots = o.boolean_or("snapshots", false);
      if (o.has("husimi")) {
        if (p.task == "evolve_diagonal") o.fail("husimi", "needs the full density matrix (task evolve or pump_ringdown)");
        const Node h = o.child("husimi");
        HusimiSpec hs;
        hs.radius = h.number_or("radius", hs.radius);
        hs.count = h.integer_or("count", hs.count);
        if (!(hs.radius > 0.0) || hs.count < 2) h.fail("", "radius must be positive and count >= 2");
        if (h.has("times_fs")) {
          for (const auto& x : h.raw("times_fs")) hs.times_fs.push_back(x.get<double>());
        }
        h.finish();
        p.husimi = hs;
      }
      if (p.snapshots && p.task == "evolve_diagonal") o.fail("snapshots", "needs the full density matrix");
      o.finish();
    }
  }

  if (p.task == "closure") {
    const Node c = root.child("closure");
    const auto n0 = coupling_n0(doc, p.res);
    if (c.has("loading_over_n0")) {
      if (!n0) c.fail("loading_over_n0", "needs n0 or a detuning in the coupling block");
      p.closure_mean0 = c.number("loading_over_n0") * *n0;
    } else {
      p.closure_mean0 = c.number("mean0");
    }
    if (!(p.closure_mean0 > 0.0)) c.fail("mean0", "must be positive");
    p.closure_var0 = c.number_or("var0", p.closure_mean0);
    const double frac = c.number_or("stop_fraction_of_n0", 0.0);
    p.closure_stop = (n0 ? *n0 : 0.0) * frac;
    c.finish();
  }
  if (p.task == "loss_curve") {
    const Node l = root.child("loss_curve");
    p.n_max = l.integer("n_max");
    if (p.n_max < 1) l.fail("n_max", "must be at least 1");
    l.finish();
  }
  if (p.task == "pinem") {
    const Node pn = root.child("pinem");
    const json& g = pn.raw("g");
    if (g.is_number()) p.g = g.get<double>();
    else if (g.is_array() && g.size() == 2) p.g = Complex(g[0].get<double>(), g[1].get<double>());
    else pn.fail("g", "expected a number or [re, im]");
    if (pn.has("k_max")) {
      p.k_max = pn.integer("k_max");
      if (*p.k_max < 0) pn.fail("k_max", "must be non-negative");
    }
    const json& st = pn.raw("states");
    if (!st.is_array() || st.empty()) pn.fail("states", "expected a non-empty array");
    for (std::size_t i = 0; i < st.size(); ++i)
      p.pinem_states.push_back(read_state(st[i], "pinem.states[" + std::to_string(i) + "]"));
    pn.finish();
  }
  if (p.task == "design") {
    const auto* q = std::get_if<QuadraticLoss>(&p.config.coupling);
    if (!q) root.fail("coupling.model", "design works on the quadratic model");
    p.design = DesignPoint{p.res.omega_a, p.res.beta, q->omega0 - p.res.omega_a, q->kappa_i, q->c2};
    if (!(p.res.beta > 0.0)) root.fail("resonator.beta", "design needs beta > 0");
    if (root.has("design")) {
      const Node d = root.child("design");
      if (d.has("target_fock")) p.design.delta0 = detuning_for_fock(d.number("target_fock"), p.res.omega_a, p.res.beta);
      p.thresholds.integrality = d.number_or("integrality", p.thresholds.integrality);
      p.thresholds.contrast = d.number_or("contrast", p.thresholds.contrast);
      d.finish();
    }
  }
  root.finish();
  return p;
}

// ---------------------------------------------------------------------------
// Execution

struct PointOutput {
  std::vector<std::string> summary_columns;
  std::vector<std::string> summary_values;
  std::vector<std::string> files;
};

void write_file(const fs::path& dir, const std::string& name, const std::string& body, PointOutput& out,
                const std::string& rel_prefix) {
  fs::create_directories(dir);
  std::ofstream f(dir / name, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + (dir / name).string());
  f << body;
  out.files.push_back(rel_prefix + name);
}

std::string populations_csv(const Trajectory& t) {
  std::ostringstream os;
  os << "t_fs";
  const Eigen::Index d = t.populations.empty() ? 0 : t.populations.front().size();
  for (Eigen::Index n = 0; n < d; ++n) os << ",p" << n;
  os << '\n';
  for (std::size_t i = 0; i < t.times_fs.size(); ++i) {
    os << fmt_num(t.times_fs[i]);
    for (Eigen::Index n = 0; n < d; ++n) os << ',' << fmt_num(t.populations[i](n));
    os << '\n';
  }
  return os.str();
}

void summarise_trajectory(const Trajectory& t, PointOutput& out) {
  const auto& last = t.records.back();
  double min_sq = std::numeric_limits<double>::infinity();
  for (const auto& r : t.records)
    if (r.mean >= 1.0 && std::isfinite(r.squeezing_db)) min_sq = std::min(min_sq, r.squeezing_db);
  if (std::isinf(min_sq)) min_sq = std::numeric_limits<double>::quiet_NaN();
  out.summary_columns = {"final_mean", "final_var", "min_squeezing_db", "final_fidelity_n0", "final_g2", "final_p0"};
  out.summary_values = {fmt_num(last.mean),        fmt_num(last.variance), fmt_num(min_sq),
                        fmt_num(last.fidelity_n0), fmt_num(last.g2),       fmt_num(t.populations.back()(0))};
}

std::vector<double> merge_times(std::vector<double> grid, const std::vector<double>& extra) {
  grid.insert(grid.end(), extra.begin(), extra.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

PointOutput execute(const Plan& p, const fs::path& dir, const std::string& rel) {
  PointOutput out;
  auto put = [&](const std::string& name, const std::string& body) { write_file(dir, name, body, out, rel); };

  if (p.task == "evolve" || p.task == "evolve_diagonal" || p.task == "pump_ringdown") {
    Trajectory traj;
    const bool want_states = p.snapshots || p.husimi.has_value();
    if (p.task == "evolve_diagonal") {
      const DensityMatrix rho0 = make_state(*p.initial, p.config.dim);
      traj = evolve_diagonal(rho0.diagonal().real(), p.config, p.grid);
    } else if (p.task == "evolve") {
      std::vector<double> grid = p.husimi ? merge_times(p.grid, p.husimi->times_fs) : p.grid;
      traj = evolve(make_state(*p.initial, p.config.dim), p.config, grid, EvolveOptions{want_states});
    } else {
      PumpOptions po = p.pump;
      po.evolve.store_states = want_states;
      po.samples = static_cast<int>(p.grid.size());
      po.log_spacing = p.log_spacing;
      traj = pump_and_ringdown(p.config, po);
    }
    std::ostringstream csv;
    write_trajectory_csv(csv, traj);
    put("trajectory.csv", csv.str());
    if (p.populations) put("populations.csv", populations_csv(traj));
    if (p.snapshots) {
      write_snapshots((dir / "snapshots").string(), traj);
      for (std::size_t i = 0; i < traj.states.size(); ++i)
        out.files.push_back(rel + "snapshots/state_t" + fmt_num(traj.times_fs[i]) + ".dat");
    }
    if (p.husimi) {
      std::vector<std::size_t> picks;
      if (p.husimi->times_fs.empty()) {
        picks.push_back(traj.times_fs.size() - 1);
      } else {
        for (double t : p.husimi->times_fs) {
          std::size_t best = 0;
          for (std::size_t i = 0; i < traj.times_fs.size(); ++i)
            if (std::abs(traj.times_fs[i] - t) < std::abs(traj.times_fs[best] - t)) best = i;
          picks.push_back(best);
        }
      }
      for (std::size_t i : picks) {
        const HusimiGrid q = husimi(traj.states[i], husimi_grid(p.husimi->radius, p.husimi->count));
        std::ostringstream hs;
        write_husimi_csv(hs, q);
        put("husimi_t" + fmt_num(traj.times_fs[i]) + ".csv", hs.str());
      }
    }
    summarise_trajectory(traj, out);
    return out;
  }

  if (p.task == "closure") {
    const ClosureTrajectory c = moment_closure_evolve(p.closure_mean0, p.closure_var0, p.config, p.grid);
    std::ostringstream csv;
    csv << "t_fs,mean_n,var_n,squeezing_db,warning\n";
    double peak = -std::numeric_limits<double>::infinity(), t_peak = 0.0;
    bool warned = false;
    for (std::size_t i = 0; i < c.times_fs.size(); ++i) {
      const double sq = c.mean[i] > 0.0 && c.variance[i] > 0.0 ? 10.0 * std::log10(c.variance[i] / c.mean[i])
                                                                : std::numeric_limits<double>::quiet_NaN();
      csv << fmt_num(c.times_fs[i]) << ',' << fmt_num(c.mean[i]) << ',' << fmt_num(c.variance[i]) << ',' << fmt_num(sq)
          << ',' << (c.warning[i] ? 1 : 0) << '\n';
      if (c.mean[i] < p.closure_stop) continue;
      warned = warned || c.warning[i];
      if (std::isfinite(sq) && -sq > peak) {
        peak = -sq;
        t_peak = c.times_fs[i];
      }
    }
    put("closure.csv", csv.str());
    out.summary_columns = {"peak_squeezing_db", "t_peak_fs", "closure_warning"};
    out.summary_values = {fmt_num(peak), fmt_num(t_peak), warned ? "1" : "0"};
    return out;
  }

  if (p.task == "loss_curve") {
    const LossCurve lc = loss_curve(p.config.coupling, p.res.omega_a, p.res.beta, p.n_max);
    std::ostringstream csv;
    write_loss_curve_csv(csv, lc);
    put("loss_curve.csv", csv.str());
    out.summary_columns = {"n_min", "kappa_min_eV"};
    out.summary_values = {std::to_string(lc.n_min), fmt_num(lc.kappa_min)};
    return out;
  }

  if (p.task == "pinem") {
    std::vector<PinemSpectrum> spectra;
    int common_k = 0;
    std::vector<int> dims;
    for (const auto& s : p.pinem_states) dims.push_back(auto_dim(s));
    const int dim = *std::max_element(dims.begin(), dims.end());
    common_k = p.k_max ? *p.k_max : dim - 1;
    for (const auto& s : p.pinem_states) {
      spectra.push_back(pinem_spectrum(make_state(s, dim), p.g, common_k));
      std::ostringstream csv;
      write_pinem_csv(csv, spectra.back(), describe(s));
      std::string tag = describe(s);
      std::replace(tag.begin(), tag.end(), ':', '_');
      put("pinem_" + tag + ".csv", csv.str());
    }
    out.summary_columns = {"states", "tvd_first_two", "p0_first"};
    out.summary_values = {std::to_string(spectra.size()),
                          spectra.size() >= 2 ? fmt_num(discriminate(spectra[0], spectra[1])) : "nan",
                          fmt_num(spectra[0].at(0))};
    return out;
  }

  // design
  const Classification c = classify(p.design, p.thresholds);
  std::ostringstream csv;
  write_design_sweep_header(csv);
  write_design_sweep_row(csv, p.design, c);
  put("design.csv", csv.str());
  out.summary_columns = {"n0", "class", "contrast", "predicted_fano"};
  out.summary_values = {fmt_num(c.n0), regime_name(c.regime), fmt_num(c.contrast), fmt_num(c.predicted_fano)};
  return out;
}

std::string axis_value_text(const json& v) {
  if (v.is_number()) return fmt_num(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_object() && v.contains("kind")) {
    try {
      return describe(read_state(v, "sweep"));
    } catch (const ConfigError&) {
    }
  }
  std::string s = v.dump();
  std::replace(s.begin(), s.end(), ',', ';');
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void set_path(json& doc, const std::string& path, const json& value) {
  json* node = &doc;
  std::stringstream ss(path);
  std::vector<std::string> keys;
  for (std::string k; std::getline(ss, k, '.');) keys.push_back(k);
  if (keys.empty()) throw ConfigError("sweep: empty axis path");
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!node->is_object() || !node->contains(keys[i]))
      throw ConfigError("field 'sweep': axis '" + path + "' names no existing field");
    node = &(*node)[keys[i]];
  }
  *node = value;
}

std::vector<SweepAxis> sweep_axes(const Scenario& s) {
  std::vector<SweepAxis> axes;
  if (!s.doc.contains("sweep")) return axes;
  const json& sw = s.doc.at("sweep");
  if (!sw.is_array()) throw ConfigError("field 'sweep': expected an array of {path, values}");
  for (std::size_t i = 0; i < sw.size(); ++i) {
    const Node a(sw[i], "sweep[" + std::to_string(i) + "]");
    SweepAxis ax;
    ax.path = a.string("path");
    if (ax.path == "sweep" || ax.path.rfind("sweep.", 0) == 0 || ax.path == "schema_version" || ax.path == "task")
      a.fail("path", "cannot sweep '" + ax.path + "'");
    const json& v = a.raw("values");
    if (!v.is_array() || v.empty()) a.fail("values", "expected a non-empty array");
    ax.values.assign(v.begin(), v.end());
    a.finish();
    axes.push_back(std::move(ax));
  }
  return axes;
}

std::vector<json> expand_sweep(const Scenario& s) {
  const auto axes = sweep_axes(s);
  std::vector<json> points{s.doc};
  for (const auto& ax : axes) {
    std::vector<json> next;
    for (const auto& base : points)
      for (const auto& v : ax.values) {
        json d = base;
        set_path(d, ax.path, v);
        next.push_back(std::move(d));
      }
    points = std::move(next);
  }
  return points;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  Scenario s;
  s.origin = origin;
  try {
    s.doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into line and column.
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    const auto pos = msg.find("syntax error");
    if (pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
  }
  if (!s.doc.is_object()) throw ConfigError(origin + ": top level must be an object");
  try {
    const Node root(s.doc, "");
    s.name = root.string("name");
    s.task = root.string("task");
    for (const auto& point : expand_sweep(s)) make_plan(point);
  } catch (const Error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return s;
}

std::string preset_directory() {
  if (const char* env = std::getenv("KERRBIC_PRESETS")) return env;
#ifdef KERRBIC_PRESET_DIR
  return KERRBIC_PRESET_DIR;
#else
  return "presets";
#endif
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(preset_directory(), ec))
    if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
  std::sort(names.begin(), names.end());
  return names;
}

Scenario load_scenario(const std::string& path_or_preset) {
  fs::path path(path_or_preset);
  if (!fs::exists(path)) {
    const fs::path preset = fs::path(preset_directory()) / (path_or_preset + ".json");
    if (!fs::exists(preset)) throw ConfigError("no scenario file or preset named '" + path_or_preset + "'");
    path = preset;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

SimulationConfig build_config(const json& doc) { return make_plan(doc).config; }

DensityMatrix build_initial_state(const json& state, int dim) { return make_state(read_state(state, "initial_state"), dim); }

int auto_state_dim(const json& state) { return auto_dim(read_state(state, "state")); }

int resolve_dim(const json& doc) { return make_plan(doc).config.dim; }

int worker_count(int requested, std::size_t points) {
  int n = requested;
  if (n <= 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("KERRBIC_WORKERS")) {
      const int cap = std::atoi(env);
      if (cap > 0) n = std::min(n > 0 ? n : cap, cap);
    }
  }
  n = std::max(n, 1);
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n), std::max<std::size_t>(points, 1)));
}

RunReport run(const Scenario& s, const RunOptions& options) {
  const auto axes = sweep_axes(s);
  const std::vector<json> points = expand_sweep(s);
  std::vector<Plan> plans;
  for (const auto& d : points) plans.push_back(make_plan(d));

  const fs::path out_dir = options.out_dir.empty() ? fs::path("out") / s.name : fs::path(options.out_dir);
  fs::create_directories(out_dir);

  const bool many = !axes.empty();
  std::vector<PointOutput> results(plans.size());
  std::vector<std::exception_ptr> errors(plans.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      try {
        char tag[32];
        std::snprintf(tag, sizeof tag, "point_%03zu/", i);
        const std::string rel = many ? tag : "";
        results[i] = execute(plans[i], many ? out_dir / tag : out_dir, rel);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = worker_count(options.workers, plans.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::ostringstream summary;
  summary << "point";
  for (const auto& ax : axes) summary << ',' << ax.path;
  for (const auto& c : results.front().summary_columns) summary << ',' << c;
  summary << '\n';
  for (std::size_t i = 0; i < results.size(); ++i) {
    summary << i;
    // Recover this point's axis values from its index (first axis slowest).
    std::size_t rem = i, stride = results.size();
    for (const auto& ax : axes) {
      stride /= ax.values.size();
      summary << ',' << axis_value_text(ax.values[rem / stride]);
      rem %= stride;
    }
    for (const auto& v : results[i].summary_values) summary << ',' << v;
    summary << '\n';
  }
  {
    std::ofstream f(out_dir / "summary.csv", std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (out_dir / "summary.csv").string());
    f << summary.str();
  }
  RunReport report;
  report.points = plans.size();
  for (const auto& r : results) report.files.insert(report.files.end(), r.files.begin(), r.files.end());
  report.files.push_back("summary.csv");
  return report;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const AccuracyError*>(&e) || dynamic_cast<const IntegratorError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const TruncationError*>(&e) || dynamic_cast<const UnsupportedModelError*>(&e))
    return 2;
  return 1;
}

}  // namespace kerrbic::scenario
