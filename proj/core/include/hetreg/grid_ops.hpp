#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hetreg {

// Uniform 1-D grid. When `extended` is set, one extra point sits beyond each
// end of the nominal domain so that central stencils are defined at every
// interior point; interior points are then indices [1, n_total - 1).
struct Grid1D {
  std::vector<double> points;
  double h = 0.0;
  std::size_t n_interior = 0;
  std::size_t n_total = 0;
  bool extended = false;

  // n_interior evenly spaced points on [lo, hi], plus the extension points if requested.
  static Grid1D uniform(double lo, double hi, std::size_t n_interior, bool extend = true);

  std::size_t first_interior() const noexcept { return extended ? 1 : 0; }
  std::size_t end_interior() const noexcept { return first_interior() + n_interior; }
  double lo() const { return points[first_interior()]; }
  double hi() const { return points[end_interior() - 1]; }
  double length() const { return hi() - lo(); }

  // Throws DomainError if spacing/ordering/count invariants are violated.
  void validate() const;
};

// Central differences in the interior, first-order one-sided at both ends.
std::vector<double> gradient_fd(std::span<const double> values, const Grid1D& grid);

// Transpose of the gradient_fd matrix applied to `weights`.
std::vector<double> gradient_fd_adjoint(std::span<const double> weights, const Grid1D& grid);

// Three-point (v[i+1] - 2 v[i] + v[i-1]) / h^2; the two end entries copy their
// nearest interior neighbour.
std::vector<double> laplacian_fd(std::span<const double> values, const Grid1D& grid);

// -D^T D v with D = gradient_fd: the Laplacian whose stationarity conditions
// match a penalty of sum_i |gradient_fd(v)_i|^2. Equals the wide stencil
// (v[i+2] - 2 v[i] + v[i-2]) / (4 h^2) away from the ends.
std::vector<double> variational_laplacian(std::span<const double> values, const Grid1D& grid);

// Mean of |f'|^2 over the interior domain (trapezoidal rule, uniform density).
double dirichlet_energy(std::span<const double> values, const Grid1D& grid);

// Mean of squared gradient norms. One entry per sample point (1-D).
double geometric_complexity(std::span<const double> gradients);

// Multi-dimensional version: `gradients` holds n_points rows of `dim` partials.
double geometric_complexity(std::span<const double> gradients, std::size_t dim);

}  // namespace hetreg
