#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hetreg/datagen.hpp"
#include "hetreg/energy.hpp"
#include "hetreg/mlp.hpp"

namespace hetreg {

// One row of a phase-diagram table. Metric fields are NaN when `diverged`.
struct MetricsRecord {
  double rho = 0.0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  Split split = Split::train;
  double mu_mse = 0.0;
  double lam_inv_sqrt_mse = 0.0;
  double gc_mu = 0.0;
  double gc_lam = 0.0;
  double ece = 0.0;
  double nll = 0.0;
  bool diverged = false;

  static MetricsRecord diverged_cell(double rho, double gamma, std::uint64_t seed, Split split);
};

double mu_mse(std::span<const double> pred_mu, std::span<const double> y);
// mean_i (lam_i^{-1/2} - |mu_i - y_i|)^2
double lam_inv_sqrt_mse(std::span<const double> pred_lam, std::span<const double> pred_mu,
                        std::span<const double> y);

// 0.05, 0.10, ..., 0.95
std::vector<double> default_ece_levels();

// Central-interval coverage calibration error: mean over levels q of
// |fraction of y_i inside the central q-interval of N(mu_i, 1/lam_i) - q|.
double ece(std::span<const double> pred_mu, std::span<const double> pred_lam, std::span<const double> y,
           std::span<const double> levels);
double ece(std::span<const double> pred_mu, std::span<const double> pred_lam, std::span<const double> y);

// mean_i [1/2 lam_i r_i^2 - 1/2 log lam_i]
double gaussian_nll(std::span<const double> pred_mu, std::span<const double> pred_lam,
                    std::span<const double> y);

// Field-theory solution scored against one realization on the grid's interior points.
MetricsRecord evaluate_ft(const FTSolution& solution, const Grid1D& grid, std::span<const double> y_field,
                          Split split);

// Geometric complexity of a network on a dataset: for 1-D inputs the network is
// evaluated on a dense uniform grid over the data range; otherwise symmetric
// finite differences along each axis at the data points.
double model_geometric_complexity(const MLP& net, const Eigen::MatrixXd& x, std::size_t dense_points = 1024);

MetricsRecord evaluate_mlp(const TrainResult& model, const Dataset& data);

// CSV with the fixed column order
// rho,gamma,seed,split,mu_mse,lam_inv_sqrt_mse,gc_mu,gc_lam,ece,nll,diverged
std::string metrics_csv_header();
std::string to_csv_row(const MetricsRecord& r);
MetricsRecord parse_metrics_row(const std::string& line);
std::string to_csv(std::span<const MetricsRecord> rows);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace hetreg
