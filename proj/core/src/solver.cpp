#include "hetreg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetreg/errors.hpp"

namespace hetreg {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment lengths must agree");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double step_size = lr / bc1;
  const double inv_sqrt_bc2 = 1.0 / std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    params[i] -= step_size * state.m[i] / (std::sqrt(state.v[i]) * inv_sqrt_bc2 + state.eps);
  }
}

void CyclicLRConfig::validate() const {
  if (!(lr_min > 0.0 && lr_min <= lr_max)) throw DomainError("cyclic LR: need 0 < lr_min <= lr_max");
  if (cycle_len < 2) throw DomainError("cyclic LR: cycle_len must be at least 2");
  if (!(amplitude_decay > 0.0 && amplitude_decay <= 1.0)) {
    throw DomainError("cyclic LR: amplitude_decay must lie in (0, 1]");
  }
}

double cyclic_lr(long long epoch, const CyclicLRConfig& config) {
  if (epoch < 0) epoch = 0;
  const long long cycle = epoch / config.cycle_len;
  const double pos = static_cast<double>(epoch % config.cycle_len);
  const double half = 0.5 * static_cast<double>(config.cycle_len);
  const double frac = pos <= half ? pos / half : (static_cast<double>(config.cycle_len) - pos) / half;
  const double amplitude = (config.lr_max - config.lr_min) * std::pow(config.amplitude_decay, static_cast<double>(cycle));
  return config.lr_min + amplitude * frac;
}

double clip_gradient_inplace(std::span<double> g, double max_norm) {
  double sq = 0.0;
  for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& x : g) x *= scale;
  }
  return norm;
}

std::vector<double> clip_gradient(std::span<const double> g, double max_norm) {
  std::vector<double> out(g.begin(), g.end());
  clip_gradient_inplace(out, max_norm);
  return out;
}

double softplus(double s) { return std::log1p(std::exp(-std::abs(s))) + std::max(s, 0.0); }

double softplus_inverse(double lam) {
  if (!(lam > 0.0)) throw DomainError("softplus_inverse: argument must be positive");
  // log(exp(lam) - 1) without overflow for large lam
  return lam > 30.0 ? lam + std::log1p(-std::exp(-lam)) : std::log(std::expm1(lam));
}

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

void SolveConfig::validate() const {
  if (epochs < 1) throw DomainError("solve config: epochs must be >= 1");
  if (!(grad_clip > 0.0)) throw DomainError("solve config: grad_clip must be positive");
  if (!(init_lam > 0.0)) throw DomainError("solve config: init_lam must be positive");
  lr.validate();
}

FTSolution solve_ft(const FTGrid& ft, const RegPair& reg, const SolveConfig& config) {
  config.validate();
  ft.grid.validate();
  const std::size_t n = ft.grid.n_total;
  if (ft.y_field.size() != n) throw DimensionError("solve_ft: y_field does not match the grid");

  const TermWeights w = TermWeights::from(reg);
  // params = [mu (n) | s (n)], lam = softplus(s)
  std::vector<double> params(2 * n);
  std::fill_n(params.begin(), n, config.init_mu);
  std::fill(params.begin() + static_cast<std::ptrdiff_t>(n), params.end(), softplus_inverse(config.init_lam));

  AdamState adam(2 * n);
  adam.beta1 = config.beta1;
  adam.beta2 = config.beta2;
  adam.eps = config.eps;

  std::vector<double> lam(n);
  std::vector<double> grads(2 * n);
  const std::span<const double> mu_view(params.data(), n);

  FTSolution sol;
  sol.reg = reg;
  sol.seed = config.seed;
  sol.n_ft = ft.grid.n_interior;
  sol.trace.reserve(static_cast<std::size_t>(config.epochs));

  auto refresh_lam = [&] {
    for (std::size_t i = 0; i < n; ++i) lam[i] = softplus(params[n + i]);
  };

  auto check_lam = [&](long long epoch) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!(lam[i] > 0.0) || !std::isfinite(lam[i])) {
        throw DivergedError("precision left (0, inf) at epoch " + std::to_string(epoch), epoch);
      }
    }
  };

  for (long long epoch = 0; epoch < config.epochs; ++epoch) {
    refresh_lam();
    check_lam(epoch);
    const auto g = free_energy_grad(mu_view, lam, ft.y_field, ft.grid, w);
    for (std::size_t i = 0; i < n; ++i) {
      grads[i] = g.mu[i];
      grads[n + i] = g.lam[i] * sigmoid(params[n + i]);
    }
    const double norm = clip_gradient_inplace(grads, config.grad_clip);
    if (!std::isfinite(norm)) {
      throw DivergedError("non-finite gradient at epoch " + std::to_string(epoch), epoch);
    }
    adam_step(params, grads, adam, cyclic_lr(epoch, config.lr));

    refresh_lam();
    check_lam(epoch);
    const double obj = free_energy(mu_view, lam, ft.y_field, ft.grid, w);
    if (!std::isfinite(obj)) {
      throw DivergedError("objective became non-finite at epoch " + std::to_string(epoch), epoch);
    }
    sol.trace.push_back(obj);
  }

  sol.mu.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(n));
  refresh_lam();
  sol.lam = lam;

  const auto window = static_cast<std::size_t>(config.lr.cycle_len);
  if (sol.trace.size() > window) {
    const double last = sol.trace.back();
    const double before = sol.trace[sol.trace.size() - 1 - window];
    const double scale = std::max({std::abs(last), std::abs(before), 1e-300});
    sol.converged = std::abs(last - before) / scale < config.convergence_tol;
  }
  return sol;
}

}  // namespace hetreg
