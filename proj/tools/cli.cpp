#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "hetreg/datagen.hpp"
#include "hetreg/energy.hpp"
#include "hetreg/io.hpp"
#include "hetreg/metrics.hpp"
#include "hetreg/mlp.hpp"
#include "hetreg/solver.hpp"
#include "hetreg/sweep.hpp"

namespace hetreg::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr long long kFtEpochs = 100000;
constexpr long long kFtCycle = 5000;
constexpr long long kNnEpochs = 600000;
constexpr long long kNnCycle = 50000;

std::size_t default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

struct Options {
  std::string config;
  std::string out;
  std::string family = "sine";
  bool homoskedastic = false;
  std::size_t n = 64;
  std::uint64_t seed = 1;
  std::string seeds = "1";
  double rho = 0.5;
  double gamma = 0.5;
  std::string t;
  long long epochs = 0;
  long long cycle = 0;
  std::size_t n_ft = 256;
  std::size_t workers = default_workers();
  std::string backend = "ft";
  std::string grid = "auto";
  std::string hidden = "128,128,128";
  std::string dataset;
  std::string csv;
  std::string target = "y";
  double test_fraction = 0.2;
  std::vector<std::string> inputs;
};

std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}
template <class T>
std::string format_value(const T& v) {
  return fmt::format("{}", v);
}

// Options that make up a run's configuration, in registration order.
struct Entry {
  std::string key;
  std::function<std::string()> value;
  bool reproducible;  // false for keys that cannot change results (out, workers)
};
using Registry = std::vector<Entry>;

template <class T>
CLI::Option* add(CLI::App* app, Registry& reg, const std::string& key, T& field, const std::string& help,
                 bool reproducible = true) {
  auto* opt = app->add_option("--" + key, field, help)->capture_default_str();
  reg.push_back({key, [&field] { return format_value(field); }, reproducible});
  return opt;
}

CLI::Option* add_flag(CLI::App* app, Registry& reg, const std::string& key, bool& field, const std::string& help) {
  auto* opt = app->add_flag("--" + key, field, help);
  reg.push_back({key, [&field] { return format_value(field); }, true});
  return opt;
}

std::string config_text(const Registry& reg) {
  std::string s;
  for (const auto& e : reg) {
    if (e.reproducible) s += e.key + " = " + e.value() + "\n";
  }
  return s;
}

nlohmann::json config_json(const Registry& reg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& e : reg) {
    if (e.reproducible) j[e.key] = e.value();
  }
  return j;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(fmt::format("{}: '{}' is not a number", what, s));
  }
}

std::uint64_t parse_u64(const std::string& s, std::string_view what) {
  try {
    std::size_t used = 0;
    if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(fmt::format("{}: '{}' is not a non-negative integer", what, s));
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(s)) seeds.push_back(parse_u64(item, "--seeds"));
  if (seeds.empty()) throw UsageError("--seeds: at least one seed is required");
  return seeds;
}

std::vector<std::size_t> parse_hidden(const std::string& s) {
  std::vector<std::size_t> widths;
  for (const auto& item : split_list(s)) {
    const auto w = parse_u64(item, "--hidden");
    if (w == 0) throw UsageError("--hidden: layer widths must be positive");
    widths.push_back(static_cast<std::size_t>(w));
  }
  if (widths.empty()) throw UsageError("--hidden: at least one hidden layer is required");
  return widths;
}

// Preset name or comma-separated values in (0, 1).
std::vector<double> parse_values(const std::string& s, std::string_view what) {
  if (s == "nn22" || s == "ft20" || s == "diagonal") return logit_grid(parse_grid_preset(s));
  std::vector<double> v;
  for (const auto& item : split_list(s)) v.push_back(parse_double(item, what));
  if (v.empty()) throw UsageError(fmt::format("{}: no values given", what));
  try {
    return logit_grid(v);
  } catch (const DomainError& e) {
    throw UsageError(fmt::format("{}: {}", what, e.what()));
  }
}

long long auto_cycle(long long epochs, long long full_cycle) {
  return std::min(full_cycle, std::max(1LL, epochs / 10));
}

struct RunDir {
  fs::path dir;
  std::string command;
  std::string config;
  std::string hash;
};

// Creates the output directory. A directory that already holds a different
// run (other command or other configuration) is refused.
RunDir prepare_run_dir(const std::string& out, const std::string& command, const Registry& reg) {
  RunDir rd{out, command, config_text(reg), ""};
  rd.hash = git_blob_hash(rd.config);
  std::error_code ec;
  fs::create_directories(rd.dir, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", rd.dir.string(), ec.message()));
  const auto manifest = rd.dir / "manifest.json";
  if (fs::exists(manifest)) {
    const auto j = read_json(manifest);
    const auto other_cmd = j.value("command", std::string{});
    const auto other_hash = j.value("config_hash", std::string{});
    if (other_cmd != command || other_hash != rd.hash) {
      throw UsageError(fmt::format("conflicting output path {}: it holds a '{}' run with config hash {}",
                                   rd.dir.string(), other_cmd, other_hash));
    }
  }
  return rd;
}

void write_manifest(const RunDir& rd, const Registry& reg, const std::string& status,
                    const std::vector<std::string>& outputs, const nlohmann::json& summary) {
  nlohmann::json j;
  j["command"] = rd.command;
  j["version"] = kVersion;
  j["config"] = config_json(reg);
  j["config_hash"] = rd.hash;
  j["status"] = status;
  j["outputs"] = outputs;
  if (!summary.is_null()) j["summary"] = summary;
  write_file_atomic(rd.dir / "config.txt", rd.config);
  write_json_atomic(rd.dir / "manifest.json", j);
}

void append_log(const RunDir& rd, const std::string& line) {
  std::ofstream log(rd.dir / "run.log", std::ios::app);
  log << line << "\n";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SyntheticSpec synthetic_spec(const Options& o) {
  SyntheticSpec spec;
  spec.family = parse_family(o.family);
  spec.heteroskedastic = !o.homoskedastic;
  spec.n_points = o.n;
  spec.seed = o.seed;
  return spec;
}

TrainTest load_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(fmt::format("{} is not a gen-data output directory", dir.string()));
  return {dataset_from_json(read_json(dir / "train.json")), dataset_from_json(read_json(dir / "test.json"))};
}

SolveConfig ft_solve_config(const Options& o) {
  SolveConfig cfg;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.lr.cycle_len = o.cycle;
  return cfg;
}

TrainConfig nn_train_config(const Options& o) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.hidden = parse_hidden(o.hidden);
  cfg.lr.cycle_len = o.cycle;
  cfg.seed = o.seed;
  return cfg;
}

void resolve_schedule(Options& o, Backend backend) {
  const bool ft = backend == Backend::ft;
  if (o.epochs == 0) o.epochs = ft ? kFtEpochs : kNnEpochs;
  if (o.epochs < 0) throw UsageError("--epochs must be positive");
  if (o.cycle == 0) o.cycle = auto_cycle(o.epochs, ft ? kFtCycle : kNnCycle);
  if (o.cycle < 0) throw UsageError("--cycle must be positive");
}

// --t picks the diagonal point (t, 1 - t) instead of explicit --rho/--gamma.
void resolve_reg(Options& o, const CLI::App* sub) {
  if (!o.t.empty()) {
    const double t = parse_double(o.t, "--t");
    const bool rho_clash = sub->count("--rho") > 0 && o.rho != t;
    const bool gamma_clash = sub->count("--gamma") > 0 && o.gamma != 1.0 - t;
    if (rho_clash || gamma_clash) throw UsageError("--t conflicts with --rho/--gamma");
    o.rho = t;
    o.gamma = 1.0 - t;
  }
  RegPair::make(o.rho, o.gamma);
}

void print_record(std::ostream& out, const MetricsRecord& r) {
  if (r.diverged) {
    fmt::print(out, "{:5}  diverged\n", to_string(r.split));
    return;
  }
  fmt::print(out, "{:5}  mu_mse={:.6g}  lam_inv_sqrt_mse={:.6g}  gc_mu={:.6g}  gc_lam={:.6g}  ece={:.6g}  nll={:.6g}\n",
             to_string(r.split), r.mu_mse, r.lam_inv_sqrt_mse, r.gc_mu, r.gc_lam, r.ece, r.nll);
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(Options& o, const Registry& reg, std::ostream& out) {
  SyntheticSpec spec;
  try {
    spec = synthetic_spec(o);
    if (o.n < 2) throw UsageError("--n must be at least 2");
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const RunDir rd = prepare_run_dir(o.out, "gen-data", reg);
  const TrainTest data = generate_synthetic_pair(spec);
  write_json_atomic(rd.dir / "train.json", to_json(data.train));
  write_json_atomic(rd.dir / "test.json", to_json(data.test));
  write_manifest(rd, reg, "complete", {"train.json", "test.json"}, nullptr);
  append_log(rd, fmt::format("gen-data {} rows in {:.3f} s", data.train.rows(), seconds_since(t0)));
  fmt::print(out, "wrote {} train and {} test rows of '{}' to {}\n", data.train.rows(), data.test.rows(),
             o.family, rd.dir.string());
  return kOk;
}

int cmd_solve_ft(Options& o, const Registry& reg, const CLI::App* sub, std::ostream& out) {
  SyntheticSpec spec;
  try {
    resolve_reg(o, sub);
    resolve_schedule(o, Backend::ft);
    if (!o.dataset.empty()) {
      const Dataset d = dataset_from_json(read_json(fs::path(o.dataset) / "train.json"));
      if (!d.spec) throw UsageError("field-theory solves need a synthetic dataset (no family recorded)");
      o.family = std::string(to_string(d.spec->family));
      o.homoskedastic = !d.spec->heteroskedastic;
      o.n = d.spec->n_points;
      o.seed = d.seed;
    }
    spec = synthetic_spec(o);
    ft_solve_config(o).validate();
    if (spec.n_points > o.n_ft) throw UsageError(fmt::format("--n-ft {} is smaller than --n {}", o.n_ft, spec.n_points));
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  const RegPair regpair = RegPair::make(o.rho, o.gamma);
  const auto t0 = std::chrono::steady_clock::now();
  const RunDir rd = prepare_run_dir(o.out, "solve-ft", reg);
  const FTGrid ft = make_ft_grid(o.n_ft, spec, o.seed, spec.n_points);

  std::vector<MetricsRecord> records;
  std::vector<std::string> outputs;
  bool diverged = false;
  try {
    const FTSolution sol = solve_ft(ft, regpair, ft_solve_config(o));
    const auto test_field = resample_field(ft, derive_seed(o.seed, 1));
    records.push_back(evaluate_ft(sol, ft.grid, ft.y_field, Split::train));
    records.push_back(evaluate_ft(sol, ft.grid, test_field, Split::test));
    write_json_atomic(rd.dir / "solution.json", to_json(sol));
    std::string fields = "x,y,mu,lam\n";
    for (std::size_t i = 0; i < ft.grid.n_total; ++i) {
      fields += fmt::format("{},{},{},{}\n", ft.grid.points[i], ft.y_field[i], sol.mu[i], sol.lam[i]);
    }
    write_file_atomic(rd.dir / "fields.csv", fields);
    outputs = {"solution.json", "fields.csv", "metrics.csv"};
  } catch (const DivergedError& e) {
    diverged = true;
    records = {MetricsRecord::diverged_cell(o.rho, o.gamma, o.seed, Split::train),
               MetricsRecord::diverged_cell(o.rho, o.gamma, o.seed, Split::test)};
    outputs = {"metrics.csv"};
    fmt::print(out, "solve diverged at epoch {}\n", e.epoch());
  }
  for (auto& r : records) {
    r.rho = o.rho;
    r.gamma = o.gamma;
  }
  write_file_atomic(rd.dir / "metrics.csv", to_csv(records));
  write_manifest(rd, reg, "complete", outputs, {{"diverged", diverged}});
  append_log(rd, fmt::format("solve-ft rho={} gamma={} epochs={} in {:.3f} s", o.rho, o.gamma, o.epochs,
                             seconds_since(t0)));
  fmt::print(out, "rho={} gamma={} n_ft={} epochs={}\n", o.rho, o.gamma, o.n_ft, o.epochs);
  for (const auto& r : records) print_record(out, r);
  return kOk;
}

// Fixed train/test data from --dataset or --csv, if either is given.
std::optional<TrainTest> fixed_data(const Options& o) {
  if (!o.dataset.empty() && !o.csv.empty()) throw UsageError("--dataset and --csv are mutually exclusive");
  if (!o.dataset.empty()) return load_dataset_dir(o.dataset);
  if (!o.csv.empty()) {
    if (!(o.test_fraction > 0.0 && o.test_fraction < 1.0)) throw UsageError("--test-fraction must lie in (0, 1)");
    const Dataset d = load_csv(o.csv, o.target, false);
    return split_train_test(d, o.test_fraction, o.seed);
  }
  return std::nullopt;
}

int cmd_train_nn(Options& o, const Registry& reg, const CLI::App* sub, std::ostream& out) {
  TrainTest data;
  TrainConfig cfg;
  try {
    resolve_reg(o, sub);
    resolve_schedule(o, Backend::mlp);
    cfg = nn_train_config(o);
    cfg.validate();
    if (auto fixed = fixed_data(o)) {
      data = std::move(*fixed);
    } else {
      data = generate_synthetic_pair(synthetic_spec(o));
    }
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  const RegPair regpair = RegPair::make(o.rho, o.gamma);
  const auto t0 = std::chrono::steady_clock::now();
  const RunDir rd = prepare_run_dir(o.out, "train-nn", reg);

  std::vector<MetricsRecord> records;
  std::vector<std::string> outputs;
  bool diverged = false;
  try {
    const TrainResult model = train_heteroskedastic(data.train, regpair, cfg);
    records.push_back(evaluate_mlp(model, data.train));
    records.push_back(evaluate_mlp(model, data.test));
    records[0].split = Split::train;
    records[1].split = Split::test;
    write_json_atomic(rd.dir / "model.json", to_json(model));
    outputs = {"model.json", "metrics.csv"};
  } catch (const DivergedError& e) {
    diverged = true;
    records = {MetricsRecord::diverged_cell(o.rho, o.gamma, o.seed, Split::train),
               MetricsRecord::diverged_cell(o.rho, o.gamma, o.seed, Split::test)};
    outputs = {"metrics.csv"};
    fmt::print(out, "training diverged at epoch {}\n", e.epoch());
  }
  for (auto& r : records) {
    r.rho = o.rho;
    r.gamma = o.gamma;
    r.seed = o.seed;
  }
  write_file_atomic(rd.dir / "metrics.csv", to_csv(records));
  write_manifest(rd, reg, "complete", outputs, {{"diverged", diverged}});
  append_log(rd, fmt::format("train-nn rho={} gamma={} epochs={} in {:.3f} s", o.rho, o.gamma, o.epochs,
                             seconds_since(t0)));
  fmt::print(out, "rho={} gamma={} hidden={} epochs={}\n", o.rho, o.gamma, o.hidden, o.epochs);
  for (const auto& r : records) print_record(out, r);
  return kOk;
}

SweepPlan sweep_plan(Options& o) {
  SweepPlan plan;
  plan.backend = parse_backend(o.backend);
  o.backend = std::string(to_string(plan.backend));
  resolve_schedule(o, plan.backend);
  plan.seeds = parse_seeds(o.seeds);
  plan.workers = o.workers;
  plan.data.n_ft = o.n_ft;
  if (plan.backend == Backend::ft) {
    if (!o.dataset.empty() || !o.csv.empty()) {
      throw UsageError("the ft backend works on synthetic families only; use --family");
    }
    plan.data.synthetic = synthetic_spec(o);
    plan.solve = ft_solve_config(o);
  } else {
    plan.data.fixed = fixed_data(o);
    if (!plan.data.fixed) plan.data.synthetic = synthetic_spec(o);
    plan.train = nn_train_config(o);
  }
  return plan;
}

std::string cell_file_name(const RegCell& c, std::uint64_t seed) {
  return fmt::format("rho={}_gamma={}_seed={}.csv", c.rho, c.gamma, seed);
}

// Per-(cell, seed) result files under <run>/cells, so an interrupted run can
// pick up where it stopped.
struct CellCache {
  fs::path dir;
  std::size_t reused = 0;
  std::size_t computed = 0;

  SweepHooks hooks() {
    fs::create_directories(dir);
    SweepHooks h;
    h.lookup = [this](const RegCell& c, std::uint64_t seed) -> std::optional<std::vector<MetricsRecord>> {
      const auto path = dir / cell_file_name(c, seed);
      if (!fs::exists(path)) return std::nullopt;
      auto rows = read_metrics_csv(path);
      if (rows.size() != 2 || rows[0].rho != c.rho || rows[0].gamma != c.gamma || rows[0].seed != seed) {
        return std::nullopt;
      }
      ++reused;
      return rows;
    };
    h.on_done = [this](const RegCell& c, std::uint64_t seed, const std::vector<MetricsRecord>& rows) {
      write_file_atomic(dir / cell_file_name(c, seed), to_csv(rows));
      ++computed;
    };
    return h;
  }
};

int cmd_sweep(Options& o, const Registry& reg, std::ostream& out) {
  SweepPlan plan;
  try {
    plan = sweep_plan(o);
    if (o.grid == "auto") o.grid = plan.backend == Backend::ft ? "ft20" : "nn22";
    plan.cells = full_grid(parse_values(o.grid, "--grid"));
    plan.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  const auto t0 = std::chrono::steady_clock::now();
  const RunDir rd = prepare_run_dir(o.out, "sweep", reg);
  write_manifest(rd, reg, "running", {}, nullptr);
  CellCache cache{rd.dir / "cells"};
  const auto records = phase_sweep(plan, cache.hooks());

  write_file_atomic(rd.dir / "metrics.csv", to_csv(records));
  const auto n_div = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.diverged; });
  write_manifest(rd, reg, "complete", {"metrics.csv"},
                 {{"cells", plan.cells.size()}, {"seeds", plan.seeds.size()}, {"records", records.size()},
                  {"diverged_records", n_div}});
  append_log(rd, fmt::format("sweep {} cells x {} seeds: {} computed, {} reused, {:.3f} s", plan.cells.size(),
                             plan.seeds.size(), cache.computed, cache.reused, seconds_since(t0)));
  fmt::print(out, "{} cells x {} seeds -> {} records ({} diverged); {} computed, {} reused\n", plan.cells.size(),
             plan.seeds.size(), records.size(), n_div, cache.computed, cache.reused);
  return kOk;
}

nlohmann::json metrics_json(const MetricsRecord& r) {
  nlohmann::json j;
  for (const auto& m : metric_names()) j[m] = metric_value(r, m);
  return j;
}

int cmd_diagonal(Options& o, const Registry& reg, std::ostream& out) {
  SweepPlan plan;
  std::vector<double> ts;
  try {
    plan = sweep_plan(o);
    if (o.t.empty()) o.t = "diagonal";
    ts = parse_values(o.t, "--t");
    plan.cells = diagonal_cells(ts);
    plan.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  const auto t0 = std::chrono::steady_clock::now();
  const RunDir rd = prepare_run_dir(o.out, "diagonal", reg);
  write_manifest(rd, reg, "running", {}, nullptr);
  CellCache cache{rd.dir / "cells"};
  const DiagonalResult res = diagonal_search(plan, ts, cache.hooks());

  write_file_atomic(rd.dir / "metrics.csv", to_csv(res.records));
  write_file_atomic(rd.dir / "selected.csv", to_csv(res.selected_records));
  write_file_atomic(rd.dir / "diagonal_train.csv", diagonal_slice_csv(res.records, Split::train));
  write_file_atomic(rd.dir / "diagonal_test.csv", diagonal_slice_csv(res.records, Split::test));
  nlohmann::json sel;
  sel["t_star_mu"] = res.t_star_mu;
  sel["t_star_lam"] = res.t_star_lam;
  sel["t_selected"] = res.t_selected;
  sel["rho"] = res.t_selected;
  sel["gamma"] = 1.0 - res.t_selected;
  sel["tie_break"] = "smallest t";
  sel["valid_seeds"] = res.selected.valid_seeds;
  sel["train"] = metrics_json(res.selected.train_mean);
  sel["test"] = metrics_json(res.selected.test_mean);
  write_json_atomic(rd.dir / "selection.json", sel);
  write_manifest(rd, reg, "complete",
                 {"metrics.csv", "selected.csv", "diagonal_train.csv", "diagonal_test.csv", "selection.json"},
                 {{"t_values", ts.size()}, {"seeds", plan.seeds.size()}, {"t_selected", res.t_selected}});
  append_log(rd, fmt::format("diagonal {} t values x {} seeds: {} computed, {} reused, {:.3f} s", ts.size(),
                             plan.seeds.size(), cache.computed, cache.reused, seconds_since(t0)));

  fmt::print(out, "t_star_mu = {}\nt_star_lam = {}\nt_selected = {}\n", res.t_star_mu, res.t_star_lam,
             res.t_selected);
  fmt::print(out, "selected (rho, gamma) = ({}, {}), {} valid seeds\n", res.t_selected, 1.0 - res.t_selected,
             res.selected.valid_seeds);
  print_record(out, res.selected.train_mean);
  print_record(out, res.selected.test_mean);
  return kOk;
}

bool same_key(const MetricsRecord& a, const MetricsRecord& b) {
  return a.rho == b.rho && a.gamma == b.gamma && a.seed == b.seed && a.split == b.split;
}

int cmd_report(Options& o, const Registry& reg, std::ostream& out) {
  if (o.inputs.empty()) throw UsageError("report needs at least one --in");
  std::vector<MetricsRecord> all;
  for (const auto& in : o.inputs) {
    fs::path p(in);
    if (fs::is_directory(p)) p /= "metrics.csv";
    if (fs::absolute(p).parent_path() == fs::absolute(fs::path(o.out))) {
      throw UsageError(fmt::format("conflicting output path: {} is also an input", o.out));
    }
    auto rows = read_metrics_csv(p);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  std::stable_sort(all.begin(), all.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
    if (a.rho != b.rho) return a.rho < b.rho;
    if (a.gamma != b.gamma) return a.gamma < b.gamma;
    if (a.seed != b.seed) return a.seed < b.seed;
    return static_cast<int>(a.split) < static_cast<int>(b.split);
  });
  std::vector<MetricsRecord> merged;
  for (const auto& r : all) {
    if (!merged.empty() && same_key(merged.back(), r)) {
      if (to_csv_row(merged.back()) != to_csv_row(r)) {
        throw Error(fmt::format("inputs disagree on rho={} gamma={} seed={} split={}", r.rho, r.gamma, r.seed,
                                to_string(r.split)));
      }
      continue;
    }
    merged.push_back(r);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const RunDir rd = prepare_run_dir(o.out, "report", reg);
  std::vector<std::string> outputs = {"merged.csv"};
  write_file_atomic(rd.dir / "merged.csv", to_csv(merged));

  std::size_t n_rho = 0;
  std::size_t n_gamma = 0;
  for (Split split : {Split::train, Split::test}) {
    for (const auto& m : metric_names()) {
      const auto table = pivot(merged, m, split);
      n_rho = table.rhos.size();
      n_gamma = table.gammas.size();
      const auto name = fmt::format("pivot_{}_{}.csv", m, to_string(split));
      write_file_atomic(rd.dir / name, to_csv(table));
      outputs.push_back(name);
    }
  }

  std::vector<MetricsRecord> diag;
  std::copy_if(merged.begin(), merged.end(), std::back_inserter(diag),
               [](const auto& r) { return std::abs(r.rho + r.gamma - 1.0) < 1e-12; });
  std::string transitions = "split,metric,t_lower,t_upper,decades\n";
  bool any_transition = false;
  if (!diag.empty()) {
    for (Split split : {Split::train, Split::test}) {
      const auto name = fmt::format("diagonal_{}.csv", to_string(split));
      write_file_atomic(rd.dir / name, diagonal_slice_csv(diag, split));
      outputs.push_back(name);
    }
    const auto points = average_diagonal(diag);
    if (points.size() >= 3) {
      for (Split split : {Split::train, Split::test}) {
        for (const std::string m : {"gc_mu", "gc_lam"}) {
          std::vector<std::optional<double>> series;
          for (const auto& p : points) {
            const double v = metric_value(split == Split::train ? p.train_mean : p.test_mean, m);
            series.push_back(v > 0.0 ? std::optional<double>(v) : std::nullopt);
          }
          try {
            const auto tr = detect_transition(series);
            transitions += fmt::format("{},{},{},{},{}\n", to_string(split), m, points[tr.lower_index].t,
                                       points[tr.upper_index].t, tr.decades);
            any_transition = true;
            if (split == Split::train) {
              fmt::print(out, "diagonal {} jump: {:.3g} decades between t={} and t={}\n", m, tr.decades,
                         points[tr.lower_index].t, points[tr.upper_index].t);
            }
          } catch (const DomainError&) {
            // not enough positive entries
          }
        }
      }
    }
  }
  if (any_transition) {
    write_file_atomic(rd.dir / "transitions.csv", transitions);
    outputs.push_back("transitions.csv");
  }
  write_manifest(rd, reg, "complete", outputs,
                 {{"records", merged.size()}, {"rhos", n_rho}, {"gammas", n_gamma}, {"diagonal_records", diag.size()}});
  append_log(rd, fmt::format("report {} records in {:.3f} s", merged.size(), seconds_since(t0)));
  fmt::print(out, "{} records; pivots are {} gamma x {} rho; wrote {} files to {}\n", merged.size(), n_gamma, n_rho,
             outputs.size(), rd.dir.string());
  return kOk;
}

// Find --config in the raw arguments and turn its lines into --key=value
// tokens placed ahead of the command-line flags, which then take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  std::string text;
  try {
    text = read_file(*path);
  } catch (const IoError& e) {
    throw UsageError(fmt::format("--config: {}", e.what()));
  }
  std::vector<std::string> expanded = {args[0]};
  for (const auto& [key, value] : parse_config_text(text)) {
    if (key == "config") throw UsageError("--config: config files cannot include other config files");
    if (value.empty()) continue;
    expanded.push_back("--" + key + "=" + value);
  }
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(fmt::format("config line {}: expected 'key = value'", lineno));
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty()) throw UsageError(fmt::format("config line {}: empty key", lineno));
    std::replace(key.begin(), key.end(), '_', '-');
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Heteroskedastic regression under (rho, gamma) regularization", "hetreg"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  const std::vector<std::string> families = {"sine", "cubic", "curve"};
  auto family_check = CLI::IsMember(families);

  std::map<std::string, Registry> regs;
  auto common = [&](CLI::App* sub, Registry& reg) {
    sub->add_option("--config", o.config, "key = value file; flags given on the command line win");
    add(sub, reg, "out", o.out, "Output directory", false)->required();
  };
  auto data_opts = [&](CLI::App* sub, Registry& reg) {
    add(sub, reg, "family", o.family, "Synthetic family (sine, cubic, curve)")->check(family_check);
    add_flag(sub, reg, "homoskedastic", o.homoskedastic, "Constant noise instead of the family's noise profile");
  };
  auto nn_data_opts = [&](CLI::App* sub, Registry& reg) {
    add(sub, reg, "n", o.n, "Training points for synthetic data")->check(CLI::PositiveNumber);
    add(sub, reg, "dataset", o.dataset, "gen-data output directory to train on");
    add(sub, reg, "csv", o.csv, "CSV file to train on (all other columns are features)");
    add(sub, reg, "target", o.target, "Target column of --csv");
    add(sub, reg, "test-fraction", o.test_fraction, "Held-out fraction of --csv rows");
  };
  auto schedule_opts = [&](CLI::App* sub, Registry& reg) {
    add(sub, reg, "epochs", o.epochs, "Optimizer epochs (0: 100000 for ft, 600000 for mlp)");
    add(sub, reg, "cycle", o.cycle, "Learning-rate cycle length (0: 5000 for ft, 50000 for mlp, at most epochs/10)");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic train/test pair");
  common(gen, regs["gen-data"]);
  data_opts(gen, regs["gen-data"]);
  add(gen, regs["gen-data"], "n", o.n, "Points per split")->check(CLI::PositiveNumber);
  add(gen, regs["gen-data"], "seed", o.seed, "Random seed");

  auto* solve = app.add_subcommand("solve-ft", "Solve the discretized field theory at one (rho, gamma)");
  {
    auto& reg = regs["solve-ft"];
    common(solve, reg);
    data_opts(solve, reg);
    add(solve, reg, "dataset", o.dataset, "gen-data output directory (family and seed are taken from it)");
    add(solve, reg, "seed", o.seed, "Random seed");
    add(solve, reg, "rho", o.rho, "Likelihood weight in (0, 1)");
    add(solve, reg, "gamma", o.gamma, "Mean share of the regularization in [0, 1]");
    add(solve, reg, "t", o.t, "Diagonal point: rho = t, gamma = 1 - t");
    add(solve, reg, "n-ft", o.n_ft, "Interior grid points")->check(CLI::Range(64, 1 << 20));
    schedule_opts(solve, reg);
  }

  auto* train = app.add_subcommand("train-nn", "Train mean and precision networks at one (rho, gamma)");
  {
    auto& reg = regs["train-nn"];
    common(train, reg);
    data_opts(train, reg);
    nn_data_opts(train, reg);
    add(train, reg, "seed", o.seed, "Random seed");
    add(train, reg, "rho", o.rho, "Likelihood weight in (0, 1)");
    add(train, reg, "gamma", o.gamma, "Mean share of the regularization in [0, 1]");
    add(train, reg, "t", o.t, "Diagonal point: rho = t, gamma = 1 - t");
    add(train, reg, "hidden", o.hidden, "Hidden layer widths, comma separated");
    schedule_opts(train, reg);
  }

  auto sweep_opts = [&](CLI::App* sub, Registry& reg) {
    common(sub, reg);
    add(sub, reg, "backend", o.backend, "ft or mlp")->check(CLI::IsMember({"ft", "mlp", "nn"}));
    data_opts(sub, reg);
    nn_data_opts(sub, reg);
    add(sub, reg, "seeds", o.seeds, "Comma-separated seeds; metrics are averaged over them");
    add(sub, reg, "n-ft", o.n_ft, "Interior grid points (ft backend)")->check(CLI::Range(64, 1 << 20));
    add(sub, reg, "hidden", o.hidden, "Hidden layer widths (mlp backend)");
    schedule_opts(sub, reg);
    add(sub, reg, "workers", o.workers, "Concurrent fits", false)->check(CLI::PositiveNumber);
  };

  auto* sweep = app.add_subcommand("sweep", "Fit every (rho, gamma) cell of a grid");
  sweep_opts(sweep, regs["sweep"]);
  add(sweep, regs["sweep"], "grid", o.grid, "nn22, ft20, diagonal or comma-separated values (auto: ft20/nn22)");

  auto* diag = app.add_subcommand("diagonal", "Search along rho = 1 - gamma and select by logit midpoint");
  sweep_opts(diag, regs["diagonal"]);
  add(diag, regs["diagonal"], "t", o.t, "Preset name or comma-separated t values (default: diagonal)");

  auto* report = app.add_subcommand("report", "Pivot tables and diagonal slice from sweep outputs");
  {
    auto& reg = regs["report"];
    common(report, reg);
    add(report, reg, "in", o.inputs, "Run directory or metrics CSV; repeat or comma-separate")
        ->required()
        ->delimiter(',')
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  }

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kUsage;
    }

    if (gen->parsed()) return cmd_gen_data(o, regs["gen-data"], out);
    if (solve->parsed()) return cmd_solve_ft(o, regs["solve-ft"], solve, out);
    if (train->parsed()) return cmd_train_nn(o, regs["train-nn"], train, out);
    if (sweep->parsed()) return cmd_sweep(o, regs["sweep"], out);
    if (diag->parsed()) return cmd_diagonal(o, regs["diagonal"], out);
    if (report->parsed()) return cmd_report(o, regs["report"], out);
    return kUsage;
  } catch (const UsageError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kRuntimeFailure;
  }
}

int main_entry(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace hetreg::cli
