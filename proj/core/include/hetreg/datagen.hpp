#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hetreg/grid_ops.hpp"

namespace hetreg {

enum class Family { sine, cubic, curve };

Family parse_family(std::string_view name);  // throws DomainError on unknown names
std::string_view to_string(Family f);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
};

Interval family_domain(Family f);
// True mean function of each synthetic family.
double family_mean(Family f, double x);
// Noise standard deviation f(x); 1 for homoskedastic variants.
double family_noise_scale(Family f, double x, bool heteroskedastic);

struct SyntheticSpec {
  Family family = Family::sine;
  bool heteroskedastic = true;
  std::size_t n_points = 64;
  std::uint64_t seed = 0;

  Interval domain() const { return family_domain(family); }
};

struct ColumnStats {
  double mean = 0.0;
  double std = 1.0;
};

enum class Split { train, test };
std::string_view to_string(Split s);

// Rows of `x` are samples. `x_stats`/`y_stats` record the affine map that was
// applied to the raw values (identity when the data was not standardized).
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<ColumnStats> x_stats;
  ColumnStats y_stats;
  Split split = Split::train;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  std::uint64_t seed = 0;
  std::optional<SyntheticSpec> spec;

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(x.cols()); }
};

struct TrainTest {
  Dataset train;
  Dataset test;
};

// Statistics with population (ddof = 0) standard deviation.
ColumnStats column_stats(const Eigen::Ref<const Eigen::VectorXd>& v);

// Undo any previous standardization, then apply the given statistics.
void restandardize(Dataset& d, const std::vector<ColumnStats>& x_stats, const ColumnStats& y_stats);
// Standardize on the dataset's own statistics.
void standardize(Dataset& d);
Dataset to_raw(const Dataset& d);

// Stream-splitting for seeds (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Dataset generate_synthetic(const SyntheticSpec& spec);

// Train set from spec.seed, an independent test set of the same size from a
// derived seed; both standardized with the train statistics.
TrainTest generate_synthetic_pair(const SyntheticSpec& spec);

// Discretized domain for the field theory: n_ft interior points on the family
// domain plus one extension point on each side, one noise realization on every
// grid point, and a random subset of interior indices for network training.
struct FTGrid {
  Grid1D grid;
  std::vector<double> y_field;  // standardized with y_stats
  std::vector<std::size_t> train_indices;
  ColumnStats y_stats;  // computed on the interior points
  SyntheticSpec spec;
  std::uint64_t seed = 0;

  std::span<const double> interior_y() const {
    return std::span<const double>(y_field).subspan(grid.first_interior(), grid.n_interior);
  }
};

FTGrid make_ft_grid(std::size_t n_ft, const SyntheticSpec& family, std::uint64_t seed,
                    std::size_t n_train = 64);

// A fresh noise realization on the same grid, standardized with the grid's statistics.
std::vector<double> resample_field(const FTGrid& ft, std::uint64_t seed);

// The training subset as a standalone dataset (standardized on itself).
Dataset ft_train_subset(const FTGrid& ft);

Dataset load_csv(const std::filesystem::path& path, std::string_view target_column,
                 bool standardize_columns);

TrainTest split_train_test(const Dataset& dataset, double test_fraction, std::uint64_t seed);

nlohmann::json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

}  // namespace hetreg
