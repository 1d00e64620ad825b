#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kerrbic/fockspace.hpp"
#include "kerrbic/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace kerrbic;
namespace sc = kerrbic::scenario;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json small_doc() {
  return json::parse(R"({
    "schema_version": 1,
    "name": "small",
    "task": "evolve_diagonal",
    "resonator": {"omega_a_eV": 1.47, "beta": 5e-6},
    "coupling": {"model": "quadratic", "n0": 4, "kappa_over_wa": 1e-3, "gamma_over_wa": 1e-2,
                 "kappa_i_over_wa": 0},
    "dim": "auto",
    "target_fock": "auto",
    "initial_state": {"kind": "poisson", "mean": 12},
    "time": {"horizon_fs": 1e7, "samples": 31},
    "outputs": {"populations": true},
    "sweep": [{"path": "coupling.kappa_i_over_wa", "values": [0, 1e-7, 1e-6]},
              {"path": "initial_state", "values": [{"kind": "poisson", "mean": 12}, "fock:9"]}]
  })");
}

std::string message_of(const std::string& text) {
  try {
    sc::parse_scenario(text, "doc.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("a valid document parses") {
  const sc::Scenario s = sc::parse_scenario(small_doc().dump());
  CHECK(s.name == "small");
  CHECK(s.task == "evolve_diagonal");
  CHECK(sc::expand_sweep(s).size() == 6);
}

TEST_CASE("sweep order: first axis slowest") {
  const auto points = sc::expand_sweep(sc::parse_scenario(small_doc().dump()));
  CHECK(points[0]["coupling"]["kappa_i_over_wa"] == 0);
  CHECK(points[1]["coupling"]["kappa_i_over_wa"] == 0);
  CHECK(points[1]["initial_state"] == "fock:9");
  CHECK(points[2]["coupling"]["kappa_i_over_wa"] == 1e-7);
}

TEST_CASE("schema errors name the field") {
  json d = small_doc();
  d["coupling"]["kapa_i_over_wa"] = 1.0;
  CHECK(message_of(d.dump()).find("coupling.kapa_i_over_wa") != std::string::npos);

  d = small_doc();
  d["resonator"].erase("beta");
  CHECK(message_of(d.dump()).find("resonator.beta") != std::string::npos);

  d = small_doc();
  d["time"]["samples"] = "many";
  CHECK(message_of(d.dump()).find("time.samples") != std::string::npos);

  d = small_doc();
  d["sweep"][0]["path"] = "coupling.nonexistent";
  CHECK(message_of(d.dump()).find("coupling.nonexistent") != std::string::npos);

  d = small_doc();
  d["schema_version"] = 99;
  CHECK(message_of(d.dump()).find("schema_version") != std::string::npos);

  d = small_doc();
  d["task"] = "dance";
  CHECK(message_of(d.dump()).find("task") != std::string::npos);
}

TEST_CASE("syntax errors carry line and column") {
  const std::string bad = "{\n  \"name\": \"x\",\n  \"task\" \"evolve\"\n}";
  const std::string msg = message_of(bad);
  CHECK(msg.find("doc.json:3:") != std::string::npos);
}

TEST_CASE("states and dimensions") {
  CHECK(sc::auto_state_dim("fock:10") == 12);
  CHECK(sc::auto_state_dim("coherent:50") == truncation_dim(50, 1e-10));
  CHECK(sc::auto_state_dim(json{{"kind", "vacuum"}}) == 2);
  const DensityMatrix c = sc::build_initial_state("coherent:4:0.5", 30);
  CHECK(std::abs(c(0, 1) - std::conj(c(1, 0))) < 1e-15);
  CHECK(std::arg(c(1, 0)) == doctest::Approx(0.5));
  CHECK_THROWS_AS(sc::build_initial_state("squeezed:3", 30), ConfigError);
  CHECK_THROWS_AS(sc::build_initial_state("poisson:50", 30), TruncationError);

  json d = small_doc();
  d.erase("sweep");
  CHECK(sc::resolve_dim(d) == truncation_dim(12, 1e-10));
  d["dim"] = 40;
  CHECK(sc::resolve_dim(d) == 40);
  CHECK(sc::build_config(d).target_fock == 4);
}

TEST_CASE("coupling forms agree") {
  json d = small_doc();
  d.erase("sweep");
  const auto a = std::get<QuadraticLoss>(sc::build_config(d).coupling);
  d["coupling"] = {{"model", "quadratic"}, {"delta0_over_wa", 3e-5}, {"c2_times_wa", 10.0}};
  const auto b = std::get<QuadraticLoss>(sc::build_config(d).coupling);
  CHECK(a.omega0 == doctest::Approx(b.omega0).epsilon(1e-14));
  CHECK(a.c2 == doctest::Approx(b.c2).epsilon(1e-14));

  d["coupling"] = {{"model", "terminated_waveguide"}, {"kappa_over_wa", 1e-3}, {"gamma_over_wa", 1e-2}, {"n0", 4}};
  const CouplingModel tw = sc::build_config(d).coupling;
  CHECK(kappa_of_n(tw, 1.47, 5e-6, 4) < 1e-12 * 1.47e-3);
}

TEST_CASE("exit codes") {
  CHECK(sc::exit_code_for(ConfigError("x")) == 2);
  CHECK(sc::exit_code_for(TruncationError("x", 3)) == 2);
  CHECK(sc::exit_code_for(DimensionError("x")) == 2);
  CHECK(sc::exit_code_for(UnsupportedModelError("x")) == 2);
  CHECK(sc::exit_code_for(AccuracyError("x")) == 3);
  CHECK(sc::exit_code_for(IntegratorError("x")) == 3);
  CHECK(sc::exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("worker count") {
  CHECK(sc::worker_count(4, 2) == 2);
  CHECK(sc::worker_count(3, 10) == 3);
  CHECK(sc::worker_count(0, 10) >= 1);
}

TEST_CASE("runs are deterministic and independent of the worker count") {
  const fs::path root = fs::temp_directory_path() / "kerrbic_scenario_test";
  fs::remove_all(root);
  const sc::Scenario s = sc::parse_scenario(small_doc().dump());
  const sc::RunReport serial = sc::run(s, {(root / "serial").string(), 1});
  const sc::RunReport parallel = sc::run(s, {(root / "parallel").string(), 4});
  const sc::RunReport again = sc::run(s, {(root / "again").string(), 3});
  CHECK(serial.points == 6);
  REQUIRE(serial.files == parallel.files);
  for (const auto& f : serial.files) {
    CAPTURE(f);
    CHECK(slurp(root / "serial" / f) == slurp(root / "parallel" / f));
    CHECK(slurp(root / "serial" / f) == slurp(root / "again" / f));
  }
  const std::string summary = slurp(root / "serial" / "summary.csv");
  CHECK(summary.rfind("point,coupling.kappa_i_over_wa,initial_state,final_mean", 0) == 0);
  CHECK(summary.find("\n1,0,fock:9,") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("other tasks run") {
  const fs::path root = fs::temp_directory_path() / "kerrbic_scenario_tasks";
  fs::remove_all(root);
  const json pinem = json::parse(R"({"schema_version": 1, "name": "p", "task": "pinem",
      "pinem": {"g": 0.1, "states": ["fock:4", {"kind": "coherent", "mean": 4}]}})");
  const auto r = sc::run(sc::parse_scenario(pinem.dump()), {(root / "pinem").string(), 1});
  CHECK(r.files.size() == 3);
  CHECK(fs::exists(root / "pinem" / "pinem_fock_4.csv"));

  const json design = json::parse(R"({"schema_version": 1, "name": "d", "task": "design",
      "resonator": {"omega_a_eV": 1.47, "beta": 5e-6},
      "coupling": {"model": "quadratic", "n0": 7, "c2_times_wa": 10, "kappa_i_over_wa": 0},
      "design": {"target_fock": 12}})");
  sc::run(sc::parse_scenario(design.dump()), {(root / "design").string(), 1});
  const std::string rows = slurp(root / "design" / "design.csv");
  CHECK(rows.find(",12,fock_capable") != std::string::npos);

  const json closure = json::parse(R"({"schema_version": 1, "name": "c", "task": "closure",
      "resonator": {"omega_a_eV": 0.6, "beta": 1e-10},
      "coupling": {"model": "quadratic", "delta0_over_wa": 5e-4, "kappa_over_wa": 5e-4, "gamma_over_wa": 5e-3,
                   "kappa_i_over_wa": 5e-7},
      "closure": {"loading_over_n0": 3, "stop_fraction_of_n0": 0.5},
      "time": {"horizon_fs": 1e8, "samples": 501}})");
  sc::run(sc::parse_scenario(closure.dump()), {(root / "closure").string(), 1});
  CHECK(fs::exists(root / "closure" / "closure.csv"));
  fs::remove_all(root);
}

TEST_CASE("bundled presets") {
  const auto names = sc::preset_names();
  CHECK(names.size() == 7);
  for (const auto& n : names) CHECK_NOTHROW(sc::load_scenario(n));
  CHECK_THROWS_AS(sc::load_scenario("not_a_preset"), ConfigError);
}
