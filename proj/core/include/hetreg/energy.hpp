#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetreg/grid_ops.hpp"

namespace hetreg {

struct AlphaBeta {
  double alpha = 0.0;
  double beta = 0.0;
};

// (rho, gamma) regularization point. rho trades likelihood against total
// regularization; gamma splits the regularization between the mean (gamma)
// and the precision (1 - gamma).
class RegPair {
 public:
  // rho in (0, 1), gamma in [0, 1]; throws DomainError otherwise.
  static RegPair make(double rho, double gamma);

  double rho() const noexcept { return rho_; }
  double gamma() const noexcept { return gamma_; }
  double rho_bar() const noexcept { return 1.0 - rho_; }
  double gamma_bar() const noexcept { return gamma_bar_; }
  double alpha() const noexcept { return gamma_ * rho_bar() / rho_; }
  double beta() const noexcept { return gamma_bar() * rho_bar() / rho_; }

  friend bool operator==(const RegPair&, const RegPair&) = default;

 private:
  friend RegPair diagonal_point(double t);
  RegPair(double rho, double gamma, double gamma_bar) : rho_(rho), gamma_(gamma), gamma_bar_(gamma_bar) {}
  double rho_;
  double gamma_;
  double gamma_bar_;  // stored so the diagonal keeps 1 - gamma = t exactly
};

AlphaBeta reparam_to_alpha_beta(double rho, double gamma);

// Point on the rho = 1 - gamma line: rho = t, gamma = 1 - t.
RegPair diagonal_point(double t);

// Multipliers of the three objective terms: data, mean penalty, precision penalty.
// The (rho, gamma) objective uses (rho, rho_bar*gamma, rho_bar*gamma_bar); the
// (alpha, beta) objective uses (1, alpha, beta).
struct TermWeights {
  double data = 1.0;
  double mean_penalty = 0.0;
  double precision_penalty = 0.0;

  static TermWeights from(const RegPair& reg);
  static TermWeights from(const AlphaBeta& ab);
};

// Discretized free energy
//   sum_{i interior} w_d [ 1/2 lam_i (y_i - mu_i)^2 - 1/2 log lam_i ]
//   + sum_{i all points} w_mu |D mu|_i^2 + w_lam |D lam|_i^2
// with D = gradient_fd and no h weighting.
double free_energy(std::span<const double> mu, std::span<const double> lam,
                   std::span<const double> y, const Grid1D& grid, const TermWeights& w);
double free_energy(std::span<const double> mu, std::span<const double> lam,
                   std::span<const double> y, const Grid1D& grid, const RegPair& reg);

struct EnergyGradient {
  std::vector<double> mu;
  std::vector<double> lam;
};

EnergyGradient free_energy_grad(std::span<const double> mu, std::span<const double> lam,
                                std::span<const double> y, const Grid1D& grid, const TermWeights& w);
EnergyGradient free_energy_grad(std::span<const double> mu, std::span<const double> lam,
                                std::span<const double> y, const Grid1D& grid, const RegPair& reg);

struct FTSolution {
  std::vector<double> mu;
  std::vector<double> lam;
  std::vector<double> trace;  // objective after every epoch
  RegPair reg = RegPair::make(0.5, 0.5);
  bool converged = false;
  std::uint64_t seed = 0;
  std::size_t n_ft = 0;
};

// Residuals of the two stationarity conditions at interior points, plus the
// terms each residual is built from:
//   res1 = lam r - 2 (rho_bar/rho) gamma Lap(mu) / p
//   res2 = r^2 - 1/lam - 4 (rho_bar/rho) gamma_bar Lap(lam) / p
// with r = mu - y, uniform p = 1/(domain length) and Lap the Laplacian matching
// the discretized penalty (variational_laplacian).
struct StationarityResiduals {
  std::vector<double> res1;
  std::vector<double> res2;
  std::vector<double> precision_residual;  // lam r
  std::vector<double> mean_curvature;      // 2 (rho_bar/rho) gamma Lap(mu) / p
  std::vector<double> squared_residual;    // r^2
  std::vector<double> variance;            // 1 / lam
  std::vector<double> precision_curvature; // 4 (rho_bar/rho) gamma_bar Lap(lam) / p
};

StationarityResiduals stationarity_residuals(const FTSolution& solution, std::span<const double> y,
                                             const Grid1D& grid);

// FTSolution <-> JSON {mu, lam, rho, gamma, trace_subsampled, seed, n_ft, converged}.
nlohmann::json to_json(const FTSolution& s, std::size_t trace_stride = 100);
FTSolution ft_solution_from_json(const nlohmann::json& j);

}  // namespace hetreg
