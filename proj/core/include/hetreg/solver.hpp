#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hetreg/datagen.hpp"
#include "hetreg/energy.hpp"

namespace hetreg {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

// Triangular cyclic schedule. Each cycle rises linearly from lr_min to its peak
// over the first half and falls back over the second; the peak amplitude above
// lr_min is multiplied by amplitude_decay after every cycle.
struct CyclicLRConfig {
  double lr_min = 5e-4;
  double lr_max = 1e-2;
  long long cycle_len = 5000;
  double amplitude_decay = 0.5;

  void validate() const;
};

double cyclic_lr(long long epoch, const CyclicLRConfig& config);

// Rescale g to norm max_norm when its Euclidean norm exceeds it.
std::vector<double> clip_gradient(std::span<const double> g, double max_norm);
// In-place variant; returns the norm before clipping.
double clip_gradient_inplace(std::span<double> g, double max_norm);

double softplus(double s);
double softplus_inverse(double lam);
double sigmoid(double s);

struct SolveConfig {
  long long epochs = 100000;
  double grad_clip = 1000.0;
  std::uint64_t seed = 0;
  CyclicLRConfig lr{};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double init_mu = 0.0;
  double init_lam = 1.0;
  double convergence_tol = 1e-6;

  void validate() const;
};

// Minimize the discretized free energy with Adam over (mu, s), lam = softplus(s).
// Throws DivergedError when the objective stops being finite.
FTSolution solve_ft(const FTGrid& ft, const RegPair& reg, const SolveConfig& config);

}  // namespace hetreg
