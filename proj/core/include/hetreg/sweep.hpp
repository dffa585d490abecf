#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetreg/datagen.hpp"
#include "hetreg/metrics.hpp"
#include "hetreg/mlp.hpp"
#include "hetreg/solver.hpp"

namespace hetreg {

enum class GridPreset { nn22, ft20, diagonal };

GridPreset parse_grid_preset(std::string_view name);
std::vector<double> logit_grid(GridPreset preset);
// Validates and returns a custom list; every value must lie in (0, 1).
std::vector<double> logit_grid(std::span<const double> custom);

double logit(double t);
double logistic(double z);

enum class Backend { ft, mlp };
Backend parse_backend(std::string_view name);
std::string_view to_string(Backend b);

struct RegCell {
  double rho = 0.5;
  double gamma = 0.5;
  friend bool operator==(const RegCell&, const RegCell&) = default;
};

// Every (rho, gamma) combination of the given values.
std::vector<RegCell> full_grid(std::span<const double> values);
// (t, 1 - t) for each t.
std::vector<RegCell> diagonal_cells(std::span<const double> t_values);

// Where the data comes from. Synthetic data is regenerated for every seed;
// fixed data (e.g. a loaded CSV split) is shared by all seeds.
struct DataSource {
  std::optional<SyntheticSpec> synthetic;
  std::optional<TrainTest> fixed;
  std::size_t n_ft = 256;
};

struct SweepPlan {
  std::vector<RegCell> cells;
  std::vector<std::uint64_t> seeds;
  Backend backend = Backend::ft;
  DataSource data;
  SolveConfig solve;
  TrainConfig train;
  std::size_t workers = 1;

  void validate() const;
};

// Runs one (cell, seed) work item; returns its train and test records, or two
// diverged records when the fit blew up.
std::vector<MetricsRecord> run_cell(const SweepPlan& plan, const RegCell& cell, std::uint64_t seed);

struct SweepHooks {
  // Return cached records to skip a work item (resume).
  std::function<std::optional<std::vector<MetricsRecord>>(const RegCell&, std::uint64_t)> lookup;
  // Called once per computed work item; calls are serialized.
  std::function<void(const RegCell&, std::uint64_t, const std::vector<MetricsRecord>&)> on_done;
};

// One record per (cell, seed, split), sorted by (rho, gamma, seed, split).
std::vector<MetricsRecord> phase_sweep(const SweepPlan& plan, const SweepHooks& hooks = {});

// Logit-scale midpoint of two diagonal positions.
double logit_midpoint(double t_a, double t_b);

struct DiagonalPoint {
  double t = 0.0;
  std::size_t valid_seeds = 0;
  MetricsRecord train_mean;  // seed-averaged, seed field = 0
  MetricsRecord test_mean;
};

struct DiagonalResult {
  std::vector<MetricsRecord> records;  // every (t, seed, split)
  std::vector<DiagonalPoint> points;   // per t, seed-averaged; diverged-only t are omitted
  double t_star_mu = 0.0;
  double t_star_lam = 0.0;
  double t_selected = 0.0;
  std::vector<MetricsRecord> selected_records;  // refit at t_selected, every seed and split
  DiagonalPoint selected;
};

// Seed-averaged per-t metrics from a record table (diverged rows excluded).
std::vector<DiagonalPoint> average_diagonal(std::span<const MetricsRecord> records);

struct Argmins {
  double t_star_mu = 0.0;
  double t_star_lam = 0.0;
};
// Argmins of train mu-MSE and train Lambda^{-1/2}-MSE; ties go to the smallest t.
Argmins diagonal_argmins(std::span<const DiagonalPoint> points);

// Plan cells are ignored; the diagonal t values define them.
DiagonalResult diagonal_search(const SweepPlan& base, std::span<const double> t_values,
                               const SweepHooks& hooks = {});

struct Transition {
  std::size_t lower_index = 0;  // boundary lies between lower_index and upper_index
  std::size_t upper_index = 0;
  double decades = 0.0;         // |log10(upper) - log10(lower)|
};

// Largest jump in log10 between adjacent non-missing entries.
Transition detect_transition(std::span<const std::optional<double>> series);
Transition detect_transition(std::span<const double> series);

// Metric accessor by column name (mu_mse, lam_inv_sqrt_mse, gc_mu, gc_lam, ece, nll).
double metric_value(const MetricsRecord& r, std::string_view metric);
const std::vector<std::string>& metric_names();

// rho x gamma pivot of one metric for one split, averaged over seeds. Rows are
// gamma (descending), columns rho (ascending); NaN where every seed diverged.
struct PivotTable {
  std::string metric;
  Split split = Split::test;
  std::vector<double> rhos;
  std::vector<double> gammas;
  std::vector<std::vector<double>> values;  // [gamma index][rho index]
};

PivotTable pivot(std::span<const MetricsRecord> records, std::string_view metric, Split split);
std::string to_csv(const PivotTable& table);

// Records on rho + gamma = 1, seed-averaged, as CSV with columns t,<metrics...>.
std::string diagonal_slice_csv(std::span<const MetricsRecord> records, Split split);

}  // namespace hetreg
