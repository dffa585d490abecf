#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "cli.hpp"
#include "hetreg/io.hpp"
#include "hetreg/metrics.hpp"
#include "test_support.hpp"

using hetreg::testing::TempDir;
namespace cli = hetreg::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("exit codes") {
  TempDir tmp("cli_exit");
  CHECK(run({"--help"}).code == cli::kOk);
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"fit"}).code == cli::kUsage);
  CHECK(run({"gen-data", "--out", (tmp / "a").string(), "--family", "quartic"}).code == cli::kUsage);
  const auto r = run({"solve-ft", "--out", (tmp / "b").string(), "--rho", "1", "--gamma", "0.5"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("no solution") != std::string::npos);
  CHECK(run({"solve-ft", "--out", (tmp / "c").string(), "--t", "0.3", "--rho", "0.4"}).code == cli::kUsage);
  CHECK(run({"report", "--out", (tmp / "d").string(), "--in", (tmp / "missing").string()}).code ==
        cli::kRuntimeFailure);
}

TEST_CASE("installed binary maps usage errors to exit code 2") {
  const char* bin = std::getenv("HETREG_BIN");
  if (bin == nullptr) return;
  const std::string cmd = std::string(bin) + " gen-data --out /nonexistent --family quartic >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("gen-data is deterministic") {
  TempDir tmp("cli_gen");
  REQUIRE(run({"gen-data", "--out", (tmp / "a").string(), "--seed", "4"}).code == 0);
  REQUIRE(run({"gen-data", "--out", (tmp / "b").string(), "--seed", "4"}).code == 0);
  REQUIRE(run({"gen-data", "--out", (tmp / "c").string(), "--seed", "5"}).code == 0);
  const auto j = hetreg::read_json(tmp / "a" / "train.json");
  CHECK(j["y"].size() == 64);
  for (const char* f : {"train.json", "test.json", "config.txt"}) {
    CHECK(hetreg::read_file(tmp / "a" / f) == hetreg::read_file(tmp / "b" / f));
  }
  CHECK(hetreg::read_file(tmp / "a" / "train.json") != hetreg::read_file(tmp / "c" / "train.json"));
  // identical rerun into the same directory is allowed, a different one is not
  CHECK(run({"gen-data", "--out", (tmp / "a").string(), "--seed", "4"}).code == 0);
  CHECK(run({"gen-data", "--out", (tmp / "a").string(), "--seed", "5"}).code == cli::kUsage);
}

TEST_CASE("config files") {
  const auto entries = cli::parse_config_text("# comment\n\nepochs = 300\n  n_ft=128  # trailing\n--seed = 2\n");
  REQUIRE(entries.size() == 3);
  CHECK(entries[0] == std::pair<std::string, std::string>{"epochs", "300"});
  CHECK(entries[1] == std::pair<std::string, std::string>{"n-ft", "128"});
  CHECK(entries[2] == std::pair<std::string, std::string>{"seed", "2"});
  CHECK_THROWS_AS(cli::parse_config_text("epochs 300\n"), cli::UsageError);
  CHECK_THROWS_AS(cli::parse_config_text(" = 3\n"), cli::UsageError);

  TempDir tmp("cli_cfg");
  hetreg::write_file_atomic(tmp / "run.cfg", "epochs = 300\nseed = 3\nrho = 0.4\n");
  // the command line wins over the file
  REQUIRE(run({"solve-ft", "--config", (tmp / "run.cfg").string(), "--out", (tmp / "a").string(), "--n-ft", "64",
               "--seed", "7"})
              .code == 0);
  const std::string cfg = hetreg::read_file(tmp / "a" / "config.txt");
  CHECK(cfg.find("epochs = 300\n") != std::string::npos);
  CHECK(cfg.find("seed = 7\n") != std::string::npos);
  CHECK(cfg.find("rho = 0.4\n") != std::string::npos);

  hetreg::write_file_atomic(tmp / "nested.cfg", "config = other.cfg\n");
  CHECK(run({"solve-ft", "--config", (tmp / "nested.cfg").string(), "--out", (tmp / "b").string()}).code ==
        cli::kUsage);
  hetreg::write_file_atomic(tmp / "unknown.cfg", "colour = red\n");
  CHECK(run({"solve-ft", "--config", (tmp / "unknown.cfg").string(), "--out", (tmp / "c").string()}).code ==
        cli::kUsage);
}

TEST_CASE("solve-ft outputs") {
  TempDir tmp("cli_solve");
  const std::vector<std::string> args = {"solve-ft", "--n-ft", "64", "--epochs", "300", "--t", "0.4", "--out"};
  auto a = args;
  a.push_back((tmp / "a").string());
  auto b = args;
  b.push_back((tmp / "b").string());
  REQUIRE(run(a).code == 0);
  REQUIRE(run(b).code == 0);
  for (const char* f : {"solution.json", "fields.csv", "metrics.csv", "config.txt"}) {
    CHECK(hetreg::read_file(tmp / "a" / f) == hetreg::read_file(tmp / "b" / f));
  }
  CHECK(lines(hetreg::read_file(tmp / "a" / "fields.csv")) == 67);
  const auto m = hetreg::read_metrics_csv(tmp / "a" / "metrics.csv");
  REQUIRE(m.size() == 2);
  CHECK(m[0].rho == 0.4);
  CHECK(m[0].gamma == doctest::Approx(0.6));
  const auto manifest = hetreg::read_json(tmp / "a" / "manifest.json");
  CHECK(manifest["status"] == "complete");
  CHECK(manifest["config_hash"] == hetreg::git_blob_hash(hetreg::read_file(tmp / "a" / "config.txt")));
}

TEST_CASE("sweep resumes from cached cells and report pivots the result") {
  TempDir tmp("cli_sweep");
  const std::string out = (tmp / "sweep").string();
  const std::vector<std::string> args = {"sweep",   "--grid",  "0.2,0.5,0.8", "--seeds", "1,2",    "--n-ft",
                                         "64",      "--epochs", "200",    "--workers", "2", "--out", out};
  REQUIRE(run(args).code == 0);
  const std::string first = hetreg::read_file(tmp / "sweep" / "metrics.csv");
  CHECK(lines(first) == 1 + 36);
  std::size_t n_cells = 0;
  for (const auto& e : fs::directory_iterator(tmp / "sweep" / "cells")) n_cells += e.is_regular_file() ? 1 : 0;
  CHECK(n_cells == 18);

  // a cached cell is trusted as-is; a missing one is recomputed
  const fs::path cached = tmp / "sweep" / "cells" / "rho=0.2_gamma=0.2_seed=1.csv";
  const fs::path removed = tmp / "sweep" / "cells" / "rho=0.8_gamma=0.5_seed=2.csv";
  REQUIRE(fs::exists(cached));
  REQUIRE(fs::exists(removed));
  auto rows = hetreg::read_metrics_csv(cached);
  rows[0].mu_mse = 123.0;
  hetreg::write_file_atomic(cached, hetreg::to_csv(rows));
  const std::string removed_text = hetreg::read_file(removed);
  fs::remove(removed);
  REQUIRE(run(args).code == 0);
  CHECK(hetreg::read_file(removed) == removed_text);
  const auto merged = hetreg::read_metrics_csv(tmp / "sweep" / "metrics.csv");
  CHECK(std::any_of(merged.begin(), merged.end(), [](const auto& r) { return r.mu_mse == 123.0; }));
  CHECK(hetreg::read_file(tmp / "sweep" / "run.log").find("1 computed, 17 reused") != std::string::npos);

  // a truncated cache file is recomputed
  hetreg::write_file_atomic(cached, hetreg::to_csv(std::span(rows).first(1)));
  REQUIRE(run(args).code == 0);
  CHECK(hetreg::read_file(tmp / "sweep" / "metrics.csv") == first);

  const std::string rep = (tmp / "report").string();
  REQUIRE(run({"report", "--in", out, "--out", rep}).code == 0);
  const std::string p = hetreg::read_file(tmp / "report" / "pivot_mu_mse_test.csv");
  CHECK(p.rfind("gamma\\rho,0.2,0.5,0.8\n0.8,", 0) == 0);
  CHECK(lines(p) == 4);
  CHECK(lines(hetreg::read_file(tmp / "report" / "diagonal_test.csv")) == 4);
  CHECK(fs::exists(tmp / "report" / "transitions.csv"));
  // the same run given twice is merged, not double counted
  REQUIRE(run({"report", "--in", out + "," + out + "/metrics.csv", "--out", (tmp / "report2").string()}).code == 0);
  CHECK(hetreg::read_file(tmp / "report2" / "merged.csv") == hetreg::read_file(tmp / "report" / "merged.csv"));
}

TEST_CASE("diagonal prints and records the selection") {
  TempDir tmp("cli_diag");
  const auto r = run({"diagonal", "--t", "0.2,0.5,0.8", "--n-ft", "64", "--epochs", "200", "--out",
                      (tmp / "d").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("t_star_mu = ") != std::string::npos);
  CHECK(r.out.find("t_star_lam = ") != std::string::npos);
  const auto sel = hetreg::read_json(tmp / "d" / "selection.json");
  const double mu = sel["t_star_mu"];
  const double lam = sel["t_star_lam"];
  const double chosen = sel["t_selected"];
  if (mu != lam) {
    const double lm = std::log(mu / (1 - mu));
    const double ll = std::log(lam / (1 - lam));
    CHECK(std::log(chosen / (1 - chosen)) == doctest::Approx(0.5 * (lm + ll)));
  } else {
    CHECK(chosen == mu);
  }
  CHECK(lines(hetreg::read_file(tmp / "d" / "selected.csv")) == 3);
}
