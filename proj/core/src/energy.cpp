#include "hetreg/energy.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

#include "hetreg/errors.hpp"

namespace hetreg {

RegPair RegPair::make(double rho, double gamma) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw DomainError("rho must lie in (0, 1), got " + fmt::format("{}", rho) +
                      (rho == 1.0 ? " (rho = 1 is unregularized likelihood; the field theory has no solution)"
                                  : ""));
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw DomainError("gamma must lie in [0, 1], got " + fmt::format("{}", gamma));
  }
  return RegPair(rho, gamma, 1.0 - gamma);
}

AlphaBeta reparam_to_alpha_beta(double rho, double gamma) {
  const RegPair r = RegPair::make(rho, gamma);
  return {r.alpha(), r.beta()};
}

RegPair diagonal_point(double t) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("diagonal parameter t must lie in (0, 1)");
  return RegPair(t, 1.0 - t, t);
}

TermWeights TermWeights::from(const RegPair& reg) {
  return {reg.rho(), reg.rho_bar() * reg.gamma(), reg.rho_bar() * reg.gamma_bar()};
}

TermWeights TermWeights::from(const AlphaBeta& ab) { return {1.0, ab.alpha, ab.beta}; }

namespace {

void check_fields(std::span<const double> mu, std::span<const double> lam, std::span<const double> y,
                  const Grid1D& grid) {
  if (mu.size() != grid.n_total || lam.size() != grid.n_total || y.size() != grid.n_total) {
    throw DimensionError("field lengths must equal grid.n_total = " + std::to_string(grid.n_total));
  }
  for (std::size_t i = 0; i < lam.size(); ++i) {
    if (!(lam[i] > 0.0)) {
      throw DomainError("precision must be strictly positive; lam[" + std::to_string(i) +
                        "] = " + fmt::format("{}", lam[i]));
    }
  }
}

double sum_squares(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

double free_energy(std::span<const double> mu, std::span<const double> lam, std::span<const double> y,
                   const Grid1D& grid, const TermWeights& w) {
  check_fields(mu, lam, y, grid);
  double data = 0.0;
  for (std::size_t i = grid.first_interior(); i < grid.end_interior(); ++i) {
    const double r = mu[i] - y[i];
    data += 0.5 * lam[i] * r * r - 0.5 * std::log(lam[i]);
  }
  double total = w.data * data;
  if (w.mean_penalty != 0.0) total += w.mean_penalty * sum_squares(gradient_fd(mu, grid));
  if (w.precision_penalty != 0.0) total += w.precision_penalty * sum_squares(gradient_fd(lam, grid));
  return total;
}

double free_energy(std::span<const double> mu, std::span<const double> lam, std::span<const double> y,
                   const Grid1D& grid, const RegPair& reg) {
  return free_energy(mu, lam, y, grid, TermWeights::from(reg));
}

EnergyGradient free_energy_grad(std::span<const double> mu, std::span<const double> lam,
                                std::span<const double> y, const Grid1D& grid, const TermWeights& w) {
  check_fields(mu, lam, y, grid);
  EnergyGradient g;
  // d/dv sum |Dv|^2 = 2 D^T D v
  g.mu = gradient_fd_adjoint(gradient_fd(mu, grid), grid);
  g.lam = gradient_fd_adjoint(gradient_fd(lam, grid), grid);
  for (std::size_t i = 0; i < grid.n_total; ++i) {
    g.mu[i] *= 2.0 * w.mean_penalty;
    g.lam[i] *= 2.0 * w.precision_penalty;
  }
  for (std::size_t i = grid.first_interior(); i < grid.end_interior(); ++i) {
    const double r = mu[i] - y[i];
    g.mu[i] += w.data * lam[i] * r;
    g.lam[i] += w.data * 0.5 * (r * r - 1.0 / lam[i]);
  }
  return g;
}

EnergyGradient free_energy_grad(std::span<const double> mu, std::span<const double> lam,
                                std::span<const double> y, const Grid1D& grid, const RegPair& reg) {
  return free_energy_grad(mu, lam, y, grid, TermWeights::from(reg));
}

StationarityResiduals stationarity_residuals(const FTSolution& solution, std::span<const double> y,
                                             const Grid1D& grid) {
  check_fields(solution.mu, solution.lam, y, grid);
  const RegPair& reg = solution.reg;
  const double inv_p = grid.length();
  const double ratio = reg.rho_bar() / reg.rho();
  const auto lap_mu = variational_laplacian(solution.mu, grid);
  const auto lap_lam = variational_laplacian(solution.lam, grid);

  StationarityResiduals out;
  const std::size_t n = grid.n_interior;
  for (auto* v : {&out.res1, &out.res2, &out.precision_residual, &out.mean_curvature,
                  &out.squared_residual, &out.variance, &out.precision_curvature}) {
    v->resize(n);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = grid.first_interior() + k;
    const double r = solution.mu[i] - y[i];
    out.precision_residual[k] = solution.lam[i] * r;
    out.mean_curvature[k] = 2.0 * ratio * reg.gamma() * lap_mu[i] * inv_p;
    out.squared_residual[k] = r * r;
    out.variance[k] = 1.0 / solution.lam[i];
    out.precision_curvature[k] = 4.0 * ratio * reg.gamma_bar() * lap_lam[i] * inv_p;
    out.res1[k] = out.precision_residual[k] - out.mean_curvature[k];
    out.res2[k] = out.squared_residual[k] - out.variance[k] - out.precision_curvature[k];
  }
  return out;
}

nlohmann::json to_json(const FTSolution& s, std::size_t trace_stride) {
  if (trace_stride == 0) trace_stride = 1;
  std::vector<double> sub;
  for (std::size_t i = 0; i < s.trace.size(); i += trace_stride) sub.push_back(s.trace[i]);
  if (!s.trace.empty() && (s.trace.size() - 1) % trace_stride != 0) sub.push_back(s.trace.back());
  return {{"mu", s.mu},
          {"lam", s.lam},
          {"rho", s.reg.rho()},
          {"gamma", s.reg.gamma()},
          {"trace_subsampled", std::move(sub)},
          {"trace_stride", trace_stride},
          {"converged", s.converged},
          {"seed", s.seed},
          {"n_ft", s.n_ft}};
}

FTSolution ft_solution_from_json(const nlohmann::json& j) {
  FTSolution s;
  s.mu = j.at("mu").get<std::vector<double>>();
  s.lam = j.at("lam").get<std::vector<double>>();
  s.reg = RegPair::make(j.at("rho").get<double>(), j.at("gamma").get<double>());
  s.trace = j.value("trace_subsampled", std::vector<double>{});
  s.converged = j.value("converged", false);
  s.seed = j.value("seed", std::uint64_t{0});
  s.n_ft = j.value("n_ft", std::size_t{0});
  if (s.mu.size() != s.lam.size()) throw DimensionError("FT solution JSON: mu and lam lengths differ");
  return s;
}

}  // namespace hetreg
