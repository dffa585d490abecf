#include "hetreg/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include <fmt/format.h>

#include "hetreg/errors.hpp"

namespace hetreg {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

GridPreset parse_grid_preset(std::string_view name) {
  if (name == "nn22") return GridPreset::nn22;
  if (name == "ft20") return GridPreset::ft20;
  if (name == "diagonal") return GridPreset::diagonal;
  throw DomainError("unknown grid preset '" + std::string(name) + "' (expected nn22, ft20 or diagonal)");
}

std::vector<double> logit_grid(GridPreset preset) {
  std::vector<double> v;
  switch (preset) {
    case GridPreset::nn22:
      v = {0.9999, 0.999, 0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2,
           0.1, 0.01, 0.001, 0.0001, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11};
      break;
    case GridPreset::ft20:
      v = {0.9999999, 0.999999, 0.99999, 0.9999, 0.999, 0.99, 0.9, 0.8, 0.7, 0.6,
           0.5, 0.4, 0.3, 0.2, 0.1, 0.01, 0.001, 0.0001, 1e-5, 1e-6};
      break;
    case GridPreset::diagonal:
      v = {1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 0.01, 0.1};
      for (int k = 11; k <= 89; ++k) v.push_back(k / 100.0);
      v.insert(v.end(), {0.9, 0.99, 0.999, 0.9999});
      break;
  }
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<double> logit_grid(std::span<const double> custom) {
  for (double t : custom) {
    if (!(t > 0.0 && t < 1.0)) {
      throw DomainError(fmt::format("regularization value {} is outside (0, 1)", t));
    }
  }
  return {custom.begin(), custom.end()};
}

double logit(double t) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("logit: argument must lie in (0, 1)");
  return std::log(t) - std::log1p(-t);
}

double logistic(double z) { return sigmoid(z); }

Backend parse_backend(std::string_view name) {
  if (name == "ft") return Backend::ft;
  if (name == "mlp" || name == "nn") return Backend::mlp;
  throw DomainError("unknown backend '" + std::string(name) + "' (expected ft or mlp)");
}

std::string_view to_string(Backend b) { return b == Backend::ft ? "ft" : "mlp"; }

std::vector<RegCell> full_grid(std::span<const double> values) {
  std::vector<RegCell> cells;
  for (double rho : values) {
    for (double gamma : values) cells.push_back({rho, gamma});
  }
  return cells;
}

std::vector<RegCell> diagonal_cells(std::span<const double> t_values) {
  std::vector<RegCell> cells;
  for (double t : t_values) {
    const RegPair p = diagonal_point(t);
    cells.push_back({p.rho(), p.gamma()});
  }
  return cells;
}

void SweepPlan::validate() const {
  if (cells.empty()) throw DomainError("sweep plan has no cells");
  for (const auto& c : cells) {
    if (!(c.rho > 0.0 && c.rho < 1.0 && c.gamma > 0.0 && c.gamma < 1.0)) {
      throw DomainError(fmt::format("sweep cell (rho={}, gamma={}) is not inside (0,1)^2", c.rho, c.gamma));
    }
  }
  if (seeds.empty()) throw DomainError("sweep plan has no seeds");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw DomainError("sweep seeds must be distinct");
  if (!data.synthetic && !data.fixed) throw DomainError("sweep plan has no dataset");
  if (backend == Backend::ft && !data.synthetic) {
    throw DomainError("the field-theory backend needs a synthetic family");
  }
  if (workers == 0) throw DomainError("sweep needs at least one worker");
  if (backend == Backend::ft && data.synthetic->n_points > data.n_ft) {
    throw DomainError(fmt::format("the field-theory grid ({} points) is smaller than the training set ({} points)",
                                  data.n_ft, data.synthetic->n_points));
  }
  if (backend == Backend::ft) {
    solve.validate();
  } else {
    train.validate();
  }
}

std::vector<MetricsRecord> run_cell(const SweepPlan& plan, const RegCell& cell, std::uint64_t seed) {
  const RegPair reg =
      cell.gamma == 1.0 - cell.rho ? diagonal_point(cell.rho) : RegPair::make(cell.rho, cell.gamma);
  const std::vector<MetricsRecord> diverged = {MetricsRecord::diverged_cell(cell.rho, cell.gamma, seed, Split::train),
                                               MetricsRecord::diverged_cell(cell.rho, cell.gamma, seed, Split::test)};
  MetricsRecord train;
  MetricsRecord test;
  if (plan.backend == Backend::ft) {
    const FTGrid ft = make_ft_grid(plan.data.n_ft, *plan.data.synthetic, seed, plan.data.synthetic->n_points);
    SolveConfig cfg = plan.solve;
    cfg.seed = seed;
    FTSolution sol;
    try {
      sol = solve_ft(ft, reg, cfg);
    } catch (const DivergedError&) {
      return diverged;
    }
    const auto test_field = resample_field(ft, derive_seed(seed, 1));
    try {
      train = evaluate_ft(sol, ft.grid, ft.y_field, Split::train);
      test = evaluate_ft(sol, ft.grid, test_field, Split::test);
    } catch (const DomainError&) {
      // non-positive precision surfacing in the metrics counts as a blown-up fit
      return diverged;
    }
  } else {
    TrainTest data;
    if (plan.data.fixed) {
      data = *plan.data.fixed;
    } else {
      SyntheticSpec spec = *plan.data.synthetic;
      spec.seed = seed;
      data = generate_synthetic_pair(spec);
    }
    TrainConfig cfg = plan.train;
    cfg.seed = seed;
    TrainResult model;
    try {
      model = train_heteroskedastic(data.train, reg, cfg);
    } catch (const DivergedError&) {
      return diverged;
    }
    try {
      train = evaluate_mlp(model, data.train);
      test = evaluate_mlp(model, data.test);
    } catch (const DomainError&) {
      return diverged;
    }
    train.split = Split::train;
    test.split = Split::test;
  }
  train.rho = test.rho = cell.rho;
  train.gamma = test.gamma = cell.gamma;
  return {train, test};
}

namespace {

bool record_less(const MetricsRecord& a, const MetricsRecord& b) {
  if (a.rho != b.rho) return a.rho < b.rho;
  if (a.gamma != b.gamma) return a.gamma < b.gamma;
  if (a.seed != b.seed) return a.seed < b.seed;
  return static_cast<int>(a.split) < static_cast<int>(b.split);
}

}  // namespace

std::vector<MetricsRecord> phase_sweep(const SweepPlan& plan, const SweepHooks& hooks) {
  plan.validate();

  struct Item {
    RegCell cell;
    std::uint64_t seed;
  };
  std::vector<Item> items;
  for (const auto& c : plan.cells) {
    for (auto s : plan.seeds) items.push_back({c, s});
  }

  std::vector<std::vector<MetricsRecord>> results(items.size());
  std::atomic<std::size_t> next{0};
  std::mutex hook_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= items.size()) return;
      try {
        const auto& it = items[k];
        if (hooks.lookup) {
          std::optional<std::vector<MetricsRecord>> cached;
          {
            std::lock_guard lock(hook_mutex);
            cached = hooks.lookup(it.cell, it.seed);
          }
          if (cached) {
            results[k] = std::move(*cached);
            continue;
          }
        }
        results[k] = run_cell(plan, it.cell, it.seed);
        if (hooks.on_done) {
          std::lock_guard lock(hook_mutex);
          hooks.on_done(it.cell, it.seed, results[k]);
        }
      } catch (...) {
        std::lock_guard lock(hook_mutex);
        if (!failure) failure = std::current_exception();
        next.store(items.size());
        return;
      }
    }
  };

  const std::size_t n_workers = std::min(plan.workers, std::max<std::size_t>(1, items.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<MetricsRecord> out;
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  std::sort(out.begin(), out.end(), record_less);
  return out;
}

double logit_midpoint(double t_a, double t_b) { return logistic(0.5 * (logit(t_a) + logit(t_b))); }

namespace {

void accumulate(MetricsRecord& acc, const MetricsRecord& r) {
  acc.mu_mse += r.mu_mse;
  acc.lam_inv_sqrt_mse += r.lam_inv_sqrt_mse;
  acc.gc_mu += r.gc_mu;
  acc.gc_lam += r.gc_lam;
  acc.ece += r.ece;
  acc.nll += r.nll;
}

void scale(MetricsRecord& acc, double k) {
  acc.mu_mse *= k;
  acc.lam_inv_sqrt_mse *= k;
  acc.gc_mu *= k;
  acc.gc_lam *= k;
  acc.ece *= k;
  acc.nll *= k;
}

MetricsRecord zero_record(double rho, double gamma, Split split) {
  MetricsRecord r;
  r.rho = rho;
  r.gamma = gamma;
  r.split = split;
  return r;
}

}  // namespace

std::vector<DiagonalPoint> average_diagonal(std::span<const MetricsRecord> records) {
  struct Acc {
    MetricsRecord train, test;
    std::size_t n_train = 0, n_test = 0;
  };
  std::map<double, Acc> by_t;
  for (const auto& r : records) {
    if (r.diverged) continue;
    auto [it, inserted] = by_t.try_emplace(r.rho);
    if (inserted) {
      it->second.train = zero_record(r.rho, r.gamma, Split::train);
      it->second.test = zero_record(r.rho, r.gamma, Split::test);
    }
    if (r.split == Split::train) {
      accumulate(it->second.train, r);
      ++it->second.n_train;
    } else {
      accumulate(it->second.test, r);
      ++it->second.n_test;
    }
  }
  std::vector<DiagonalPoint> out;
  for (auto& [t, acc] : by_t) {
    if (acc.n_train == 0) continue;
    DiagonalPoint p;
    p.t = t;
    p.valid_seeds = acc.n_train;
    p.train_mean = acc.train;
    scale(p.train_mean, 1.0 / static_cast<double>(acc.n_train));
    p.test_mean = acc.test;
    if (acc.n_test > 0) {
      scale(p.test_mean, 1.0 / static_cast<double>(acc.n_test));
    } else {
      p.test_mean = MetricsRecord::diverged_cell(t, 1.0 - t, 0, Split::test);
    }
    out.push_back(p);
  }
  return out;
}

Argmins diagonal_argmins(std::span<const DiagonalPoint> points) {
  if (points.empty()) throw DomainError("diagonal search: every cell diverged");
  std::vector<DiagonalPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  Argmins a;
  double best_mu = std::numeric_limits<double>::infinity();
  double best_lam = std::numeric_limits<double>::infinity();
  bool found_mu = false;
  bool found_lam = false;
  for (const auto& p : sorted) {
    // strict < keeps the smallest t on ties
    if (std::isfinite(p.train_mean.mu_mse) && (!found_mu || p.train_mean.mu_mse < best_mu)) {
      best_mu = p.train_mean.mu_mse;
      a.t_star_mu = p.t;
      found_mu = true;
    }
    if (std::isfinite(p.train_mean.lam_inv_sqrt_mse) && (!found_lam || p.train_mean.lam_inv_sqrt_mse < best_lam)) {
      best_lam = p.train_mean.lam_inv_sqrt_mse;
      a.t_star_lam = p.t;
      found_lam = true;
    }
  }
  if (!found_mu || !found_lam) throw DomainError("diagonal search: no finite train metrics");
  return a;
}

DiagonalResult diagonal_search(const SweepPlan& base, std::span<const double> t_values, const SweepHooks& hooks) {
  const auto ts = logit_grid(t_values);
  if (ts.empty()) throw DomainError("diagonal search: no t values");
  SweepPlan plan = base;
  plan.cells = diagonal_cells(ts);

  DiagonalResult res;
  res.records = phase_sweep(plan, hooks);
  res.points = average_diagonal(res.records);
  const Argmins am = diagonal_argmins(res.points);
  res.t_star_mu = am.t_star_mu;
  res.t_star_lam = am.t_star_lam;
  res.t_selected = am.t_star_mu == am.t_star_lam ? am.t_star_mu : logit_midpoint(am.t_star_mu, am.t_star_lam);

  const double sel[] = {res.t_selected};
  SweepPlan refit = base;
  refit.cells = diagonal_cells(sel);
  res.selected_records = phase_sweep(refit, hooks);
  const auto sel_points = average_diagonal(res.selected_records);
  if (sel_points.empty()) {
    res.selected.t = res.t_selected;
    res.selected.train_mean = MetricsRecord::diverged_cell(res.t_selected, 1.0 - res.t_selected, 0, Split::train);
    res.selected.test_mean = MetricsRecord::diverged_cell(res.t_selected, 1.0 - res.t_selected, 0, Split::test);
  } else {
    res.selected = sel_points.front();
  }
  return res;
}

Transition detect_transition(std::span<const std::optional<double>> series) {
  if (series.size() < 3) throw DomainError("detect_transition: series needs at least 3 entries");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!series[i]) continue;
    const double v = *series[i];
    if (std::isnan(v)) continue;
    if (!(v > 0.0)) {
      throw DomainError(fmt::format("detect_transition: entry {} is {}, log10 needs positive values", i, v));
    }
    idx.push_back(i);
  }
  if (idx.size() < 2) throw DomainError("detect_transition: fewer than two usable entries");
  Transition best{idx[0], idx[1], -1.0};
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    const double jump = std::abs(std::log10(*series[idx[k + 1]]) - std::log10(*series[idx[k]]));
    if (jump > best.decades) best = {idx[k], idx[k + 1], jump};
  }
  return best;
}

Transition detect_transition(std::span<const double> series) {
  std::vector<std::optional<double>> s(series.begin(), series.end());
  return detect_transition(s);
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"mu_mse", "lam_inv_sqrt_mse", "gc_mu", "gc_lam", "ece", "nll"};
  return names;
}

double metric_value(const MetricsRecord& r, std::string_view metric) {
  if (metric == "mu_mse") return r.mu_mse;
  if (metric == "lam_inv_sqrt_mse") return r.lam_inv_sqrt_mse;
  if (metric == "gc_mu") return r.gc_mu;
  if (metric == "gc_lam") return r.gc_lam;
  if (metric == "ece") return r.ece;
  if (metric == "nll") return r.nll;
  throw DomainError("unknown metric '" + std::string(metric) + "'");
}

namespace {

// 1 - t on the diagonal can land an ulp away from the same grid value.
double axis_key(double v) { return std::stod(fmt::format("{:.12g}", v)); }

}  // namespace

PivotTable pivot(std::span<const MetricsRecord> records, std::string_view metric, Split split) {
  PivotTable t;
  t.metric = std::string(metric);
  t.split = split;
  std::set<double> rhos;
  std::set<double> gammas;
  std::map<std::pair<double, double>, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    if (r.split != split) continue;
    const double rho = axis_key(r.rho);
    const double gamma = axis_key(r.gamma);
    rhos.insert(rho);
    gammas.insert(gamma);
    auto& a = acc[{rho, gamma}];
    if (r.diverged) continue;
    const double v = metric_value(r, metric);
    if (std::isnan(v)) continue;
    a.first += v;
    a.second += 1;
  }
  t.rhos.assign(rhos.begin(), rhos.end());
  t.gammas.assign(gammas.rbegin(), gammas.rend());
  t.values.assign(t.gammas.size(), std::vector<double>(t.rhos.size(), kNaN));
  for (std::size_t gi = 0; gi < t.gammas.size(); ++gi) {
    for (std::size_t ri = 0; ri < t.rhos.size(); ++ri) {
      const auto it = acc.find({t.rhos[ri], t.gammas[gi]});
      if (it != acc.end() && it->second.second > 0) {
        t.values[gi][ri] = it->second.first / static_cast<double>(it->second.second);
      }
    }
  }
  return t;
}

std::string to_csv(const PivotTable& table) {
  std::string out = "gamma\\rho";
  for (double r : table.rhos) out += fmt::format(",{}", r);
  out += '\n';
  for (std::size_t gi = 0; gi < table.gammas.size(); ++gi) {
    out += fmt::format("{}", table.gammas[gi]);
    for (double v : table.values[gi]) out += std::isnan(v) ? std::string(",") : fmt::format(",{}", v);
    out += '\n';
  }
  return out;
}

std::string diagonal_slice_csv(std::span<const MetricsRecord> records, Split split) {
  std::vector<MetricsRecord> diag;
  for (const auto& r : records) {
    if (r.split == split && std::abs(r.rho + r.gamma - 1.0) < 1e-12) {
      // averaged through the train slot so test-only tables keep their rows
      diag.push_back(r);
      diag.back().split = Split::train;
    }
  }
  const auto points = average_diagonal(diag);
  std::string out = "t";
  for (const auto& m : metric_names()) out += "," + m;
  out += ",valid_seeds\n";
  for (const auto& p : points) {
    const MetricsRecord& m = p.train_mean;
    out += fmt::format("{}", p.t);
    for (const auto& name : metric_names()) {
      const double v = metric_value(m, name);
      out += std::isnan(v) ? std::string(",") : fmt::format(",{}", v);
    }
    out += fmt::format(",{}\n", p.valid_seeds);
  }
  return out;
}

}  // namespace hetreg
