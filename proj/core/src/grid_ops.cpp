#include "hetreg/grid_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetreg/errors.hpp"

namespace hetreg {

namespace {

void check_operand(std::span<const double> values, const Grid1D& grid) {
  if (grid.n_total < 3) {
    throw DomainError("degenerate grid: finite differences need at least 3 points, got " +
                      std::to_string(grid.n_total));
  }
  if (values.size() != grid.n_total) {
    throw DimensionError("vector length " + std::to_string(values.size()) +
                         " does not match grid size " + std::to_string(grid.n_total));
  }
}

}  // namespace

Grid1D Grid1D::uniform(double lo, double hi, std::size_t n_interior, bool extend) {
  if (n_interior < 2) {
    throw DomainError("a uniform grid needs at least 2 interior points");
  }
  if (!(hi > lo)) {
    throw DomainError("grid interval must satisfy lo < hi");
  }
  Grid1D g;
  g.n_interior = n_interior;
  g.extended = extend;
  g.n_total = n_interior + (extend ? 2 : 0);
  g.h = (hi - lo) / static_cast<double>(n_interior - 1);
  g.points.resize(g.n_total);
  const double offset = extend ? 1.0 : 0.0;
  for (std::size_t i = 0; i < g.n_total; ++i) {
    g.points[i] = lo + (static_cast<double>(i) - offset) * g.h;
  }
  // Pin the nominal endpoints exactly.
  g.points[g.first_interior()] = lo;
  g.points[g.end_interior() - 1] = hi;
  return g;
}

void Grid1D::validate() const {
  if (points.size() != n_total) {
    throw DomainError("grid: points.size() != n_total");
  }
  if (n_total != n_interior + (extended ? 2 : 0)) {
    throw DomainError("grid: n_total inconsistent with n_interior and extension");
  }
  if (!(h > 0.0)) {
    throw DomainError("grid: spacing must be positive");
  }
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double step = points[i + 1] - points[i];
    if (!(step > 0.0) || std::abs(step - h) > 1e-12 * std::max(1.0, std::abs(h)) * 16.0) {
      throw DomainError("grid: points are not uniformly spaced at index " + std::to_string(i));
    }
  }
}

std::vector<double> gradient_fd(std::span<const double> values, const Grid1D& grid) {
  check_operand(values, grid);
  const std::size_t n = values.size();
  const double inv_h = 1.0 / grid.h;
  const double inv_2h = 0.5 * inv_h;
  std::vector<double> out(n);
  out[0] = (values[1] - values[0]) * inv_h;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    out[i] = (values[i + 1] - values[i - 1]) * inv_2h;
  }
  out[n - 1] = (values[n - 1] - values[n - 2]) * inv_h;
  return out;
}

std::vector<double> gradient_fd_adjoint(std::span<const double> weights, const Grid1D& grid) {
  check_operand(weights, grid);
  const std::size_t n = weights.size();
  const double inv_h = 1.0 / grid.h;
  const double inv_2h = 0.5 * inv_h;
  std::vector<double> out(n, 0.0);
  out[0] -= weights[0] * inv_h;
  out[1] += weights[0] * inv_h;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    out[i - 1] -= weights[i] * inv_2h;
    out[i + 1] += weights[i] * inv_2h;
  }
  out[n - 2] -= weights[n - 1] * inv_h;
  out[n - 1] += weights[n - 1] * inv_h;
  return out;
}

std::vector<double> laplacian_fd(std::span<const double> values, const Grid1D& grid) {
  check_operand(values, grid);
  const std::size_t n = values.size();
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  std::vector<double> out(n);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    out[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) * inv_h2;
  }
  out[0] = out[1];
  out[n - 1] = out[n - 2];
  return out;
}

std::vector<double> variational_laplacian(std::span<const double> values, const Grid1D& grid) {
  auto out = gradient_fd_adjoint(gradient_fd(values, grid), grid);
  for (double& v : out) v = -v;
  return out;
}

double dirichlet_energy(std::span<const double> values, const Grid1D& grid) {
  const auto grad = gradient_fd(values, grid);
  const std::size_t a = grid.first_interior();
  const std::size_t b = grid.end_interior();
  double sum = 0.0;
  for (std::size_t i = a; i < b; ++i) sum += grad[i] * grad[i];
  sum -= 0.5 * (grad[a] * grad[a] + grad[b - 1] * grad[b - 1]);
  // h * sum approximates the integral; dividing by h * (n - 1) gives the uniform-density mean.
  return sum / static_cast<double>(grid.n_interior - 1);
}

double geometric_complexity(std::span<const double> gradients) {
  return geometric_complexity(gradients, 1);
}

double geometric_complexity(std::span<const double> gradients, std::size_t dim) {
  if (dim == 0) throw DimensionError("geometric_complexity: dimension must be positive");
  if (gradients.empty()) throw DomainError("geometric_complexity: no gradients supplied");
  if (gradients.size() % dim != 0) {
    throw DimensionError("geometric_complexity: gradient buffer is not a multiple of dim");
  }
  double sum = 0.0;
  for (double g : gradients) sum += g * g;
  return sum / static_cast<double>(gradients.size() / dim);
}

}  // namespace hetreg
