#include <doctest.h>

#include <map>
#include <mutex>
#include <set>

#include "hetreg/errors.hpp"
#include "hetreg/sweep.hpp"

using namespace hetreg;

namespace {

SweepPlan small_ft_plan() {
  SweepPlan plan;
  plan.backend = Backend::ft;
  plan.data.synthetic = SyntheticSpec{Family::sine, true, 32, 0};
  plan.data.n_ft = 32;
  plan.solve.epochs = 400;
  plan.solve.lr.cycle_len = 100;
  return plan;
}

MetricsRecord record(double rho, double gamma, std::uint64_t seed, Split split, double mu, double lam) {
  MetricsRecord r;
  r.rho = rho;
  r.gamma = gamma;
  r.seed = seed;
  r.split = split;
  r.mu_mse = mu;
  r.lam_inv_sqrt_mse = lam;
  return r;
}

}  // namespace

TEST_CASE("grid presets") {
  CHECK(logit_grid(GridPreset::nn22).size() == 22);
  CHECK(logit_grid(GridPreset::ft20).size() == 20);
  const auto d = logit_grid(GridPreset::diagonal);
  CHECK(d.size() == 94);
  CHECK(std::is_sorted(d.begin(), d.end()));
  CHECK(std::set<double>(d.begin(), d.end()).size() == 94);
  CHECK(d.front() == 1e-11);
  CHECK(d.back() == 0.9999);
  for (auto p : {GridPreset::nn22, GridPreset::ft20, GridPreset::diagonal}) {
    for (double t : logit_grid(p)) {
      CHECK(t > 0.0);
      CHECK(t < 1.0);
    }
  }
  CHECK(parse_grid_preset("ft20") == GridPreset::ft20);
  CHECK_THROWS_AS(parse_grid_preset("ft21"), DomainError);
  const std::vector<double> bad = {0.5, 1.0};
  CHECK_THROWS_AS(logit_grid(bad), DomainError);
  CHECK(parse_backend("nn") == Backend::mlp);
  CHECK_THROWS_AS(parse_backend("gp"), DomainError);
}

TEST_CASE("logit helpers") {
  CHECK(logit(0.5) == 0.0);
  CHECK(logistic(logit(0.3)) == doctest::Approx(0.3));
  CHECK(logit_midpoint(0.2, 0.8) == doctest::Approx(0.5));
  CHECK(logit_midpoint(0.1, 0.1) == doctest::Approx(0.1));
  // geometric mean of odds
  const double m = logit_midpoint(1e-6, 0.01);
  CHECK(m / (1.0 - m) == doctest::Approx(std::sqrt(1e-6 / (1.0 - 1e-6) * 0.01 / 0.99)));
  CHECK_THROWS_AS(logit(0.0), DomainError);
}

TEST_CASE("cell generation") {
  const std::vector<double> v = {0.1, 0.5, 0.9};
  const auto cells = full_grid(v);
  CHECK(cells.size() == 9);
  CHECK(std::find(cells.begin(), cells.end(), RegCell{0.9, 0.1}) != cells.end());
  const auto diag = diagonal_cells(v);
  REQUIRE(diag.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(diag[i].rho + diag[i].gamma == doctest::Approx(1.0));
}

TEST_CASE("plan validation") {
  SweepPlan plan = small_ft_plan();
  plan.cells = {{0.5, 0.5}};
  plan.seeds = {1};
  CHECK_NOTHROW(plan.validate());
  plan.seeds.clear();
  CHECK_THROWS_AS(plan.validate(), DomainError);
  plan.seeds = {1};
  plan.cells = {{1.0, 0.5}};
  CHECK_THROWS_AS(plan.validate(), DomainError);
  plan.cells = {{0.5, 0.5}};
  plan.data.n_ft = 16;
  CHECK_THROWS_AS(plan.validate(), DomainError);
  // configuration errors surface instead of being recorded as diverged fits
  CHECK_THROWS_AS(run_cell(plan, {0.5, 0.5}, 1), DomainError);
}

TEST_CASE("phase sweep produces one record per cell, seed and split") {
  SweepPlan plan = small_ft_plan();
  const std::vector<double> v = {0.3, 0.7};
  plan.cells = full_grid(v);
  plan.seeds = {1, 2};
  plan.workers = 1;
  const auto serial = phase_sweep(plan);
  CHECK(serial.size() == 16);
  for (const auto& r : serial) CHECK(!r.diverged);
  for (std::size_t i = 1; i < serial.size(); ++i) {
    const auto& a = serial[i - 1];
    const auto& b = serial[i];
    CHECK(std::tie(a.rho, a.gamma, a.seed, a.split) < std::tie(b.rho, b.gamma, b.seed, b.split));
  }
  plan.workers = 3;
  const auto parallel = phase_sweep(plan);
  CHECK(to_csv(parallel) == to_csv(serial));

  SUBCASE("resume hooks skip cached items") {
    std::map<std::pair<double, std::uint64_t>, std::vector<MetricsRecord>> cache;
    for (const auto& r : serial) {
      if (r.rho == 0.3 && r.gamma == 0.3) cache[{0.3, r.seed}].push_back(r);
    }
    std::mutex m;
    int computed = 0;
    SweepHooks hooks;
    hooks.lookup = [&](const RegCell& c, std::uint64_t seed) -> std::optional<std::vector<MetricsRecord>> {
      if (c.rho == 0.3 && c.gamma == 0.3) return cache.at({0.3, seed});
      return std::nullopt;
    };
    hooks.on_done = [&](const RegCell&, std::uint64_t, const std::vector<MetricsRecord>&) {
      std::lock_guard lock(m);
      ++computed;
    };
    const auto resumed = phase_sweep(plan, hooks);
    CHECK(computed == 6);
    CHECK(to_csv(resumed) == to_csv(serial));
  }
}

TEST_CASE("unsolvable cells become diverged records") {
  SweepPlan plan = small_ft_plan();
  plan.solve.lr.lr_min = 1e300;
  plan.solve.lr.lr_max = 1e300;
  const auto recs = run_cell(plan, {0.5, 0.5}, 1);
  REQUIRE(recs.size() == 2);
  for (const auto& r : recs) {
    CHECK(r.diverged);
    CHECK(std::isnan(r.mu_mse));
  }
}

TEST_CASE("diagonal averaging and argmins") {
  std::vector<MetricsRecord> recs = {
      record(0.2, 0.8, 1, Split::train, 4.0, 1.0), record(0.2, 0.8, 2, Split::train, 2.0, 3.0),
      record(0.2, 0.8, 1, Split::test, 9.0, 9.0),  record(0.2, 0.8, 2, Split::test, 9.0, 9.0),
      record(0.5, 0.5, 1, Split::train, 3.0, 2.0), record(0.5, 0.5, 1, Split::test, 9.0, 9.0),
      record(0.8, 0.2, 1, Split::train, 1.0, 5.0), record(0.8, 0.2, 1, Split::test, 9.0, 9.0),
  };
  recs.push_back(MetricsRecord::diverged_cell(0.5, 0.5, 2, Split::train));
  recs.push_back(MetricsRecord::diverged_cell(0.5, 0.5, 2, Split::test));
  recs.push_back(MetricsRecord::diverged_cell(0.9, 0.1, 1, Split::train));
  recs.push_back(MetricsRecord::diverged_cell(0.9, 0.1, 1, Split::test));

  const auto pts = average_diagonal(recs);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].t == 0.2);
  CHECK(pts[0].valid_seeds == 2);
  CHECK(pts[0].train_mean.mu_mse == 3.0);
  CHECK(pts[0].train_mean.lam_inv_sqrt_mse == 2.0);
  CHECK(pts[1].valid_seeds == 1);

  const auto am = diagonal_argmins(pts);
  CHECK(am.t_star_mu == 0.8);
  // 0.2 and 0.5 tie at 2.0
  CHECK(am.t_star_lam == 0.2);
  CHECK(logit_midpoint(am.t_star_mu, am.t_star_lam) == doctest::Approx(0.5));
  CHECK_THROWS(diagonal_argmins(std::vector<DiagonalPoint>{}));
}

TEST_CASE("diagonal search on a small field-theory run") {
  SweepPlan plan = small_ft_plan();
  plan.seeds = {1};
  const std::vector<double> t = {0.1, 0.5, 0.9};
  const auto res = diagonal_search(plan, t);
  CHECK(res.records.size() == 6);
  CHECK(res.points.size() == 3);
  for (const auto& r : res.records) CHECK(!r.diverged);
  CHECK(res.t_selected == doctest::Approx(logit_midpoint(res.t_star_mu, res.t_star_lam)));
  CHECK(res.selected_records.size() == 2);
  CHECK(res.selected.t == doctest::Approx(res.t_selected));
  for (const auto& r : res.selected_records) CHECK(r.rho + r.gamma == doctest::Approx(1.0));
}

TEST_CASE("transition detection") {
  const std::vector<double> jump = {1.0, 1.0, 1000.0, 1000.0};
  auto tr = detect_transition(jump);
  CHECK(tr.lower_index == 1);
  CHECK(tr.upper_index == 2);
  CHECK(tr.decades == doctest::Approx(3.0));

  const std::vector<double> flat = {2.0, 2.0, 2.0};
  CHECK(detect_transition(flat).decades == 0.0);

  const std::vector<std::optional<double>> gaps = {10.0, std::nullopt, 0.01, 0.02};
  tr = detect_transition(gaps);
  CHECK(tr.lower_index == 0);
  CHECK(tr.upper_index == 2);
  CHECK(tr.decades == doctest::Approx(3.0));

  const std::vector<double> bad = {1.0, 0.0};
  CHECK_THROWS_AS(detect_transition(bad), DomainError);
}

TEST_CASE("pivot and diagonal slice") {
  std::vector<MetricsRecord> recs;
  for (double rho : {0.1, 0.5}) {
    for (double gamma : {0.5, 0.9}) {
      for (std::uint64_t s : {1, 2}) {
        recs.push_back(record(rho, gamma, s, Split::test, rho + gamma + static_cast<double>(s), 0.0));
      }
    }
  }
  recs.push_back(MetricsRecord::diverged_cell(0.9, 0.5, 1, Split::test));
  const auto p = pivot(recs, "mu_mse", Split::test);
  CHECK(p.rhos == std::vector<double>{0.1, 0.5, 0.9});
  CHECK(p.gammas == std::vector<double>{0.9, 0.5});
  REQUIRE(p.values.size() == 2);
  CHECK(p.values[0][0] == doctest::Approx(0.1 + 0.9 + 1.5));
  CHECK(p.values[1][1] == doctest::Approx(0.5 + 0.5 + 1.5));
  CHECK(std::isnan(p.values[1][2]));
  CHECK(std::isnan(p.values[0][2]));
  const auto csv = to_csv(p);
  CHECK(csv.rfind("gamma\\rho,0.1,0.5,0.9\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  CHECK(metric_value(recs[0], "mu_mse") == recs[0].mu_mse);
  CHECK_THROWS_AS(metric_value(recs[0], "accuracy"), DomainError);
  CHECK_THROWS_AS(pivot(recs, "accuracy", Split::test), DomainError);

  // only (0.1, 0.9) and (0.5, 0.5) lie on the diagonal
  const auto slice = diagonal_slice_csv(recs, Split::test);
  CHECK(std::count(slice.begin(), slice.end(), '\n') == 3);
  CHECK(slice.find("\n0.1,") != std::string::npos);
  CHECK(slice.find("\n0.5,") != std::string::npos);
}
