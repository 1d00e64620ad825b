#include "kerrbic/csv.hpp"
#include "kerrbic/design.hpp"
#include "kerrbic/fockspace.hpp"
#include "kerrbic/pinem.hpp"
#include "kerrbic/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace sc = kerrbic::scenario;
using nlohmann::json;

namespace {

// Command-line values are JSON when they parse as JSON and plain strings otherwise.
json cli_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

std::pair<std::string, std::string> split_assignment(const std::string& a, const char* what) {
  const auto eq = a.find('=');
  if (eq == std::string::npos || eq == 0) throw kerrbic::ConfigError(std::string(what) + " '" + a + "': expected path=value");
  return {a.substr(0, eq), a.substr(eq + 1)};
}

sc::Scenario reparse(const sc::Scenario& s) { return sc::parse_scenario(s.doc.dump(2), s.origin); }

sc::Scenario with_overrides(sc::Scenario s, const std::vector<std::string>& sets) {
  for (const auto& a : sets) {
    const auto [path, value] = split_assignment(a, "--set");
    sc::set_path(s.doc, path, cli_value(value));
  }
  return sets.empty() ? s : reparse(s);
}

int run_and_report(const sc::Scenario& s, const std::string& out, int workers) {
  sc::RunOptions opt;
  opt.out_dir = out.empty() ? "out/" + s.name : out;
  opt.workers = workers;
  const sc::RunReport r = sc::run(s, opt);
  std::cout << s.name << ": " << r.points << " point(s), " << r.files.size() << " file(s) in " << opt.out_dir << "\n";
  std::ifstream summary(opt.out_dir + "/summary.csv");
  std::cout << summary.rdbuf();
  return 0;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw kerrbic::ConfigError("cannot write " + path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kerrbic: Kerr resonators with frequency-dependent loss"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "kerrbic 0.1.0");

  // run
  std::string scenario_arg, out_dir;
  int workers = 0;
  std::vector<std::string> sets, axes;
  auto* run = app.add_subcommand("run", "run a scenario file or bundled preset");
  run->add_option("scenario", scenario_arg, "scenario file or preset name")->required();
  run->add_option("--out", out_dir, "output directory (default out/<name>)");
  run->add_option("--workers", workers, "worker threads (default KERRBIC_WORKERS or all cores)");
  run->add_option("--set", sets, "override a field, path=value (repeatable)");

  auto* validate = app.add_subcommand("validate", "check a scenario without running it");
  validate->add_option("scenario", scenario_arg)->required();

  auto* sweep = app.add_subcommand("sweep", "run a scenario over extra sweep axes");
  sweep->add_option("scenario", scenario_arg)->required();
  sweep->add_option("--axis", axes, "path=v1,v2,... (repeatable)")->required();
  sweep->add_option("--out", out_dir);
  sweep->add_option("--workers", workers);
  sweep->add_option("--set", sets);

  // loss-profile
  double omega_a = 1.47, beta = 5e-6, kappa_wa = 1e-3, gamma_wa = 1e-2, kappa_i_wa = 0.0;
  std::optional<double> n0, delta0_wa, c2_wa;
  int n_max = 120;
  std::string out_file;
  auto* loss = app.add_subcommand("loss-profile", "kappa(n) for the quadratic loss model");
  loss->add_option("--omega-a", omega_a, "resonance energy, eV")->capture_default_str();
  loss->add_option("--beta", beta, "Kerr coefficient")->capture_default_str();
  auto* loss_n0 = loss->add_option("--n0", n0, "photon number at the loss minimum");
  loss->add_option("--delta0-over-wa", delta0_wa, "detuning of the minimum over omega_a")->excludes(loss_n0);
  loss->add_option("--kappa-over-wa", kappa_wa)->capture_default_str();
  loss->add_option("--gamma-over-wa", gamma_wa)->capture_default_str();
  loss->add_option("--c2-times-wa", c2_wa, "curvature times omega_a (overrides kappa and gamma)");
  loss->add_option("--kappa-i-over-wa", kappa_i_wa)->capture_default_str();
  loss->add_option("--n-max", n_max)->capture_default_str();
  loss->add_option("--out", out_file, "CSV file (default stdout)");

  // evolve
  std::string preset = "fock10";
  std::optional<double> preload;
  auto* evolve = app.add_subcommand("evolve", "pump and ring down a preset");
  evolve->add_option("--preset", preset)->capture_default_str();
  evolve->add_option("--preload", preload, "coherent preload mean photon number");
  evolve->add_option("--out", out_dir);
  evolve->add_option("--workers", workers);

  // design
  std::optional<double> target_fock;
  auto* design = app.add_subcommand("design", "detuning for a target Fock number, or classify a detuning");
  auto* d_target = design->add_option("--target-fock", target_fock);
  design->add_option("--delta0-over-wa", delta0_wa)->excludes(d_target);
  design->add_option("--beta", beta)->capture_default_str();
  design->add_option("--omega-a", omega_a)->capture_default_str();
  design->add_option("--kappa-over-wa", kappa_wa)->capture_default_str();
  design->add_option("--gamma-over-wa", gamma_wa)->capture_default_str();
  design->add_option("--c2-times-wa", c2_wa);
  design->add_option("--kappa-i-over-wa", kappa_i_wa)->capture_default_str();

  // pinem
  std::string state;
  double g_re = 0.1, g_im = 0.0;
  std::optional<int> k_max, dim;
  auto* pinem = app.add_subcommand("pinem", "electron energy spectrum after one pass");
  pinem->add_option("--state", state, "vacuum, fock:n, coherent:mean[:phase] or poisson:mean")->required();
  pinem->add_option("--g", g_re, "coupling (real part)")->capture_default_str();
  pinem->add_option("--g-im", g_im, "coupling (imaginary part)")->capture_default_str();
  pinem->add_option("--kmax", k_max, "electron ladder half-width");
  pinem->add_option("--dim", dim, "photon truncation");
  pinem->add_option("--out", out_file, "CSV file (default stdout)");

  auto* presets = app.add_subcommand("presets", "list bundled presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_and_report(with_overrides(sc::load_scenario(scenario_arg), sets), out_dir, workers);

    if (*validate) {
      const sc::Scenario s = sc::load_scenario(scenario_arg);
      std::cout << s.origin << ": ok (" << s.task << ", " << sc::expand_sweep(s).size() << " point(s))\n";
      return 0;
    }

    if (*sweep) {
      sc::Scenario s = with_overrides(sc::load_scenario(scenario_arg), sets);
      if (!s.doc.contains("sweep")) s.doc["sweep"] = json::array();
      for (const auto& a : axes) {
        const auto [path, list] = split_assignment(a, "--axis");
        json values = json::array();
        std::stringstream ss(list);
        for (std::string v; std::getline(ss, v, ',');) values.push_back(cli_value(v));
        s.doc["sweep"].push_back({{"path", path}, {"values", values}});
      }
      return run_and_report(reparse(s), out_dir, workers);
    }

    const double c2 = c2_wa ? *c2_wa / omega_a : (kappa_wa * omega_a) / (gamma_wa * omega_a * gamma_wa * omega_a);

    if (*loss) {
      kerrbic::DesignPoint p{omega_a, beta, 0.0, kappa_i_wa * omega_a, c2};
      if (n0) p.delta0 = kerrbic::detuning_for_fock(*n0, omega_a, beta);
      else if (delta0_wa) p.delta0 = *delta0_wa * omega_a;
      else throw kerrbic::ConfigError("loss-profile: give --n0 or --delta0-over-wa");
      std::ofstream f;
      kerrbic::write_loss_curve_csv(open_out(out_file, f), kerrbic::loss_curve(p, n_max));
      return 0;
    }

    if (*evolve) {
      sc::Scenario s = sc::load_scenario(preset);
      if (preload) {
        if (!s.doc.contains("pump")) throw kerrbic::ConfigError("preset '" + preset + "' has no pump block");
        sc::set_path(s.doc, "pump.target_mean", *preload);
        s = reparse(s);
      }
      return run_and_report(s, out_dir, workers);
    }

    if (*design) {
      kerrbic::DesignPoint p{omega_a, beta, 0.0, kappa_i_wa * omega_a, c2};
      if (target_fock) {
        p.delta0 = kerrbic::detuning_for_fock(*target_fock, omega_a, beta);
        std::cout << "delta0_over_wa=" << kerrbic::fmt_num(p.delta0 / omega_a) << "\n"
                  << "delta0_eV=" << kerrbic::fmt_num(p.delta0) << "\n";
      } else if (delta0_wa) {
        p.delta0 = *delta0_wa * omega_a;
      } else {
        throw kerrbic::ConfigError("design: give --target-fock or --delta0-over-wa");
      }
      const kerrbic::Classification c = kerrbic::classify(p);
      std::cout << "n0=" << kerrbic::fmt_num(c.n0) << "\n"
                << "class=" << kerrbic::regime_name(c.regime) << "\n"
                << "contrast=" << kerrbic::fmt_num(c.contrast) << "\n"
                << "predicted_fano=" << kerrbic::fmt_num(c.predicted_fano) << "\n";
      return 0;
    }

    if (*pinem) {
      const json st = cli_value(state).is_object() ? cli_value(state) : json(state);
      const int d = dim.value_or(sc::auto_state_dim(st));
      const kerrbic::DensityMatrix rho = sc::build_initial_state(st, d);
      const kerrbic::PinemSpectrum sp = kerrbic::pinem_spectrum(rho, kerrbic::Complex(g_re, g_im), k_max);
      std::ofstream f;
      kerrbic::write_pinem_csv(open_out(out_file, f), sp, state);
      return 0;
    }

    if (*presets) {
      std::cout << "# " << sc::preset_directory() << "\n";
      for (const auto& n : sc::preset_names()) std::cout << n << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "kerrbic: " << e.what() << "\n";
    return sc::exit_code_for(e);
  }
  return 0;
}
