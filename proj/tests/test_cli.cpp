// Apache License, Version 2.0, refer to LICENSE.txt
//
// Spawns the real binary: exit codes, artifacts, and determinism are the
// contract here, not library internals.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "doctest.h"
#include "otb/util.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kCli = OTB_CLI_PATH;

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::path(OTB_TEST_TMPDIR) / "cli" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

/// Runs the CLI with stdout/stderr captured to files; single-threaded so the
/// byte-identical-rerun checks are meaningful.
RunResult run_cli(const std::string& args, const fs::path& dir) {
  const std::string out_file = (dir / "stdout.txt").string();
  const std::string err_file = (dir / "stderr.txt").string();
  const std::string cmd = "OMP_NUM_THREADS=1 " + kCli + " " + args + " > " +
                          out_file + " 2> " + err_file;
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = otb::read_text_file(out_file);
  r.err = otb::read_text_file(err_file);
  return r;
}

void write(const fs::path& p, const std::string& text) {
  otb::write_text_file(p.string(), text);
}

std::string gamma_poisson_config() {
  return "seed = 2026\n"
         "n_train = 800\n"
         "[prior]\n"
         "kind = \"gamma\"\n"
         "shape = 2\n"
         "scale = 0.5\n"
         "[likelihood]\n"
         "kind = \"poisson\"\n"
         "counts = 1\n"
         "[basis]\n"
         "degree = 5\n";
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  return json::parse(in);
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("fit writes its artifacts and exits clean on convergence") {
  const fs::path dir = fresh_dir("fit");
  write(dir / "run.toml", gamma_poisson_config());
  const RunResult r = run_cli("fit --config " + (dir / "run.toml").string() +
                                  " --out-dir " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "map.json"));
  CHECK(fs::exists(dir / "out" / "solve_report.json"));
  CHECK(fs::exists(dir / "out" / "config.resolved.toml"));
  const json rep = read_json(dir / "out" / "solve_report.json");
  CHECK(rep.at("termination") == "Converged");
  CHECK(rep.at("iterations").get<int>() >= 1);

  // the resolved copy parses back and still carries the run inputs
  const std::string resolved =
      otb::read_text_file((dir / "out" / "config.resolved.toml").string());
  CHECK(resolved.find("[prior]") != std::string::npos);
  CHECK(resolved.find("seed = 2026") != std::string::npos);
}

TEST_CASE("a boundary-pinned fit still writes artifacts but exits 2") {
  const fs::path dir = fresh_dir("fit_stall");
  write(dir / "run.toml",
        "n_train = 500\n"
        "[prior]\nkind = \"uniform\"\nlo = 0\nhi = 2\n"
        "[target_prior]\nkind = \"uniform\"\nlo = 0\nhi = 1\n"
        "[basis]\ndegree = 5\n");
  const RunResult r = run_cli("fit --config " + (dir / "run.toml").string() +
                                  " --out-dir " + (dir / "out").string() + " --quiet",
                              dir);
  CHECK(r.exit_code == 2);
  CHECK(fs::exists(dir / "out" / "map.json"));  // artifacts precede the verdict
  const json rep = read_json(dir / "out" / "solve_report.json");
  CHECK(rep.at("termination") == "LineSearchStall");
}

TEST_CASE("config typos fail fast and name the key") {
  const fs::path dir = fresh_dir("typo");
  write(dir / "run.toml", gamma_poisson_config() + "[solver]\ngraad_tol = 1e-6\n");
  const RunResult r = run_cli("fit --config " + (dir / "run.toml").string() +
                                  " --out-dir " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("solver.graad_tol") != std::string::npos);
  CHECK(r.err.find('\n') == r.err.size() - 1);  // single-line error
  CHECK_FALSE(fs::exists(dir / "out" / "map.json"));
}

TEST_CASE("sampling is deterministic per seed and validates n") {
  const fs::path dir = fresh_dir("sample");
  write(dir / "run.toml", gamma_poisson_config());
  REQUIRE(run_cli("fit --config " + (dir / "run.toml").string() + " --out-dir " +
                      (dir / "out").string() + " --quiet",
                  dir)
              .exit_code == 0);
  const std::string map = (dir / "out" / "map.json").string();

  const RunResult a = run_cli("sample --map " + map + " -n 2000 --seed 7 --out-dir " +
                                  (dir / "a").string(),
                              dir);
  CHECK(a.exit_code == 0);
  CHECK(count_lines(dir / "a" / "samples.csv") == 2001);  // header + rows

  std::ifstream csv(dir / "a" / "samples.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line.rfind("x1", 0) == 0);
  double min_val = 1e300;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    min_val = std::min(min_val, std::stod(cell));
  }
  CHECK(min_val >= 0.0);  // gamma posterior support

  const RunResult b = run_cli("sample --map " + map + " -n 2000 --seed 7 --out-dir " +
                                  (dir / "b").string(),
                              dir);
  CHECK(b.exit_code == 0);
  CHECK(otb::read_text_file((dir / "a" / "samples.csv").string()) ==
        otb::read_text_file((dir / "b" / "samples.csv").string()));

  const RunResult bad = run_cli("sample --map " + map + " -n 0", dir);
  CHECK(bad.exit_code == 1);
  const RunResult missing = run_cli("sample --map " + (dir / "absent.json").string() +
                                        " -n 10",
                                    dir);
  CHECK(missing.exit_code == 1);
}

TEST_CASE("diagnose reuses the fit config and reports the evidence") {
  const fs::path dir = fresh_dir("diagnose");
  write(dir / "run.toml", gamma_poisson_config());
  REQUIRE(run_cli("fit --config " + (dir / "run.toml").string() + " --out-dir " +
                      (dir / "out").string() + " --quiet",
                  dir)
              .exit_code == 0);
  const RunResult r = run_cli("diagnose --map " + (dir / "out" / "map.json").string() +
                                  " --config " + (dir / "run.toml").string() +
                                  " -n 800 --out-dir " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 0);
  const json d = read_json(dir / "out" / "diagnostics.json");
  // evidence for this conjugate pair is 8/27; the map route lands close
  CHECK(std::abs(d.at("log_beta_map").get<double>() - std::log(8.0 / 27.0)) < 0.05);
  CHECK(d.at("var_T").get<double>() < 0.05);
  CHECK(d.at("n_used").get<int>() == 800);
  CHECK(d.at("kl_estimate").is_null());  // no closed-form reference supplied
  CHECK(d.contains("map_hash"));
}

TEST_CASE("decide picks actions and rejects an empty candidate list") {
  const fs::path dir = fresh_dir("decide");
  write(dir / "run.toml", gamma_poisson_config());
  REQUIRE(run_cli("fit --config " + (dir / "run.toml").string() + " --out-dir " +
                      (dir / "out").string() + " --quiet",
                  dir)
              .exit_code == 0);
  write(dir / "dec.toml",
        "[decision]\nkind = \"quadratic\"\npoints = [0.5, 1.0, 2.0]\n"
        "names = [\"low\", \"mid\", \"high\"]\n");
  const RunResult r = run_cli("decide --map " + (dir / "out" / "map.json").string() +
                                  " --config " + (dir / "dec.toml").string() +
                                  " -n 2000 --out-dir " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 0);
  const json d = read_json(dir / "out" / "decision.json");
  // posterior mean of Gamma(3, 1/3) is 1, so the quadratic loss favours "mid"
  CHECK(d.at("bayes_action_name") == "mid");
  CHECK(d.at("plugin_action_name") == "mid");
  REQUIRE(d.at("expected_loss").size() == 3);
  CHECK(d.at("expected_loss")[1].get<double>() <
        d.at("expected_loss")[0].get<double>());
  CHECK(d.at("expected_loss")[1].get<double>() <
        d.at("expected_loss")[2].get<double>());

  write(dir / "empty.toml", "[decision]\npoints = []\n");
  const RunResult bad = run_cli("decide --map " + (dir / "out" / "map.json").string() +
                                    " --config " + (dir / "empty.toml").string(),
                                dir);
  CHECK(bad.exit_code == 1);
}

TEST_CASE("roc prints the hand-case AUC and writes the curve") {
  const fs::path dir = fresh_dir("roc");
  write(dir / "scores.csv", "score,label\n0.9,1\n0.8,0\n0.7,1\n0.6,0\n");
  const RunResult r = run_cli("roc --scores " + (dir / "scores.csv").string() +
                                  " --out-dir " + (dir / "out").string() + " --quiet",
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out == "AUC 0.75\n");
  CHECK(count_lines(dir / "out" / "roc.csv") == 6);  // header + 5 points

  const RunResult bad = run_cli("roc --scores " + (dir / "absent.csv").string(), dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("absent.csv") != std::string::npos);
}

TEST_CASE("experiment runs a preset with overrides and writes the report") {
  const fs::path dir = fresh_dir("experiment");
  write(dir / "exp.toml",
        "seed = 11\n[experiment]\nn_train = 300\ngrid_points = 50\n");
  const RunResult r = run_cli("experiment uniform_example --config " +
                                  (dir / "exp.toml").string() + " --out-dir " +
                                  (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 0);
  const json rep = read_json(dir / "out" / "report.json");
  CHECK(rep.at("scenario") == "uniform_example");
  CHECK(rep.at("seed") == 11);
  CHECK(rep.at("settings").at("n_train") == 300);
  CHECK(rep.at("metrics").at("sup_err").get<double>() < 1e-2);
  CHECK(count_lines(dir / "out" / "trials.csv") == 51);
  CHECK(fs::exists(dir / "out" / "config.resolved.toml"));
  CHECK(r.out.find("sup_err") != std::string::npos);  // metrics echoed

  const RunResult bad = run_cli("experiment no_such_thing", dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("no_such_thing") != std::string::npos);
}

TEST_CASE("the conjugate experiment emits the advertised metric keys") {
  const fs::path dir = fresh_dir("experiment_gp");
  write(dir / "exp.toml",
        "[experiment]\nn_train = [50, 200]\nn_mc = 20000\n");
  const RunResult r = run_cli("experiment gamma_poisson --config " +
                                  (dir / "exp.toml").string() + " --out-dir " +
                                  (dir / "out").string() + " --quiet",
                              dir);
  CHECK(r.exit_code == 0);
  const json rep = read_json(dir / "out" / "report.json");
  for (const char* key : {"var_T", "kl", "ks", "log_beta_map", "log_beta_mc"})
    CHECK(rep.at("metrics").contains(key));
}

TEST_CASE("bad invocations exit 1 and help exits 0") {
  const fs::path dir = fresh_dir("usage");
  CHECK(run_cli("", dir).exit_code == 1);              // missing subcommand
  CHECK(run_cli("--help", dir).exit_code == 0);
  CHECK(run_cli("fit", dir).exit_code == 1);           // missing --config
  CHECK(run_cli("frobnicate", dir).exit_code == 1);    // unknown subcommand
  CHECK(run_cli("sample -n 5", dir).exit_code == 1);   // missing --map
}
