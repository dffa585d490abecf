#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hetreg/errors.hpp"
#include "hetreg/grid_ops.hpp"
#include "test_support.hpp"

using namespace hetreg;
using hetreg::testing::dot;
using hetreg::testing::random_vector;

namespace {

std::vector<double> sample(const Grid1D& g, double (*f)(double)) {
  std::vector<double> v(g.n_total);
  for (std::size_t i = 0; i < g.n_total; ++i) v[i] = f(g.points[i]);
  return v;
}

}  // namespace

TEST_CASE("uniform grid layout") {
  const auto g = Grid1D::uniform(0.0, 1.0, 11);
  CHECK(g.n_total == 13);
  CHECK(g.first_interior() == 1);
  CHECK(g.end_interior() == 12);
  CHECK(g.h == doctest::Approx(0.1));
  CHECK(g.lo() == 0.0);
  CHECK(g.hi() == 1.0);
  CHECK(g.points.front() == doctest::Approx(-0.1));
  CHECK(g.points.back() == doctest::Approx(1.1));
  CHECK_NOTHROW(g.validate());

  const auto plain = Grid1D::uniform(-1.0, 1.0, 5, false);
  CHECK(plain.n_total == 5);
  CHECK(plain.first_interior() == 0);
  CHECK(plain.length() == 2.0);

  CHECK_THROWS_AS(Grid1D::uniform(0.0, 1.0, 1), DomainError);
  CHECK_THROWS_AS(Grid1D::uniform(1.0, 0.0, 10), DomainError);
}

TEST_CASE("validate rejects uneven spacing") {
  auto g = Grid1D::uniform(0.0, 1.0, 6);
  g.points[3] += 0.01;
  CHECK_THROWS_AS(g.validate(), DomainError);
}

TEST_CASE("gradient of a linear function is exact everywhere") {
  const auto g = Grid1D::uniform(-2.0, 3.0, 17);
  const auto v = sample(g, [](double x) { return 3.0 * x - 1.0; });
  for (double d : gradient_fd(v, g)) CHECK(d == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("central differences are exact on quadratics") {
  const auto g = Grid1D::uniform(0.0, 1.0, 21);
  const auto v = sample(g, [](double x) { return x * x; });
  const auto d = gradient_fd(v, g);
  for (std::size_t i = 1; i + 1 < g.n_total; ++i) CHECK(d[i] == doctest::Approx(2.0 * g.points[i]).epsilon(1e-10));
  // one-sided ends carry the O(h) error
  CHECK(d[0] == doctest::Approx(g.points[0] + g.points[1]).epsilon(1e-10));
}

TEST_CASE("gradient converges at second order in the interior") {
  double prev = 0.0;
  for (std::size_t n : {33, 65, 129}) {
    const auto g = Grid1D::uniform(0.0, 1.0, n);
    const auto v = sample(g, [](double x) { return std::sin(3.0 * x); });
    const auto d = gradient_fd(v, g);
    double err = 0.0;
    for (std::size_t i = 1; i + 1 < g.n_total; ++i) err = std::max(err, std::abs(d[i] - 3.0 * std::cos(3.0 * g.points[i])));
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("adjoint satisfies <Dv, w> = <v, D^T w>") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng() % 40;
    const auto g = Grid1D::uniform(0.0, 1.0 + trial, n);
    const auto v = random_vector(rng, g.n_total);
    const auto w = random_vector(rng, g.n_total);
    const double lhs = dot(gradient_fd(v, g), w);
    const double rhs = dot(v, gradient_fd_adjoint(w, g));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("variational laplacian is -D^T D and matches the wide stencil") {
  std::mt19937_64 rng(11);
  const auto g = Grid1D::uniform(0.0, 2.0, 30);
  const auto v = random_vector(rng, g.n_total);
  const auto lap = variational_laplacian(v, g);
  // <v, -D^T D v> = -|Dv|^2
  const auto dv = gradient_fd(v, g);
  CHECK(dot(v, lap) == doctest::Approx(-dot(dv, dv)).epsilon(1e-12));
  for (std::size_t i = 3; i + 3 < g.n_total; ++i) {
    const double wide = (v[i + 2] - 2.0 * v[i] + v[i - 2]) / (4.0 * g.h * g.h);
    CHECK(lap[i] == doctest::Approx(wide).epsilon(1e-10));
  }
}

TEST_CASE("compact laplacian") {
  const auto g = Grid1D::uniform(0.0, 1.0, 11);
  const auto v = sample(g, [](double x) { return 5.0 * x * x + x; });
  const auto lap = laplacian_fd(v, g);
  for (double l : lap) CHECK(l == doctest::Approx(10.0).epsilon(1e-9));

  std::vector<double> w(g.n_total, 0.0);
  w[4] = 1.0;
  const auto lw = laplacian_fd(w, g);
  CHECK(lw[4] == doctest::Approx(-2.0 / (g.h * g.h)));
  CHECK(lw[0] == lw[1]);
  CHECK(lw[g.n_total - 1] == lw[g.n_total - 2]);
}

TEST_CASE("dirichlet energy") {
  SUBCASE("linear function") {
    const auto g = Grid1D::uniform(-1.0, 1.0, 50);
    CHECK(dirichlet_energy(sample(g, [](double x) { return 2.0 * x; }), g) == doctest::Approx(4.0));
  }
  SUBCASE("constant function") {
    const auto g = Grid1D::uniform(0.0, 1.0, 10);
    CHECK(dirichlet_energy(std::vector<double>(g.n_total, 3.5), g) == 0.0);
  }
  SUBCASE("sin(pi x) on [0,1] -> pi^2/2") {
    const auto g = Grid1D::uniform(0.0, 1.0, 2001);
    const auto v = sample(g, [](double x) { return std::sin(std::numbers::pi * x); });
    CHECK(dirichlet_energy(v, g) == doctest::Approx(std::numbers::pi * std::numbers::pi / 2.0).epsilon(1e-5));
  }
  SUBCASE("scaling is quadratic") {
    std::mt19937_64 rng(3);
    const auto g = Grid1D::uniform(0.0, 1.0, 40);
    auto v = random_vector(rng, g.n_total);
    const double e = dirichlet_energy(v, g);
    for (double& x : v) x *= 3.0;
    CHECK(dirichlet_energy(v, g) == doctest::Approx(9.0 * e));
  }
}

TEST_CASE("geometric complexity") {
  const std::vector<double> g1 = {1.0, -2.0, 3.0};
  CHECK(geometric_complexity(g1) == doctest::Approx(14.0 / 3.0));
  const std::vector<double> g2 = {1.0, 1.0, 2.0, 0.0};  // two points in 2-D
  CHECK(geometric_complexity(g2, 2) == doctest::Approx(3.0));
  CHECK_THROWS_AS(geometric_complexity(std::vector<double>{}), DomainError);
  CHECK_THROWS_AS(geometric_complexity(std::vector<double>{1.0, 2.0, 3.0}, 2), DimensionError);
}

TEST_CASE("operand checks") {
  const auto g = Grid1D::uniform(0.0, 1.0, 8);
  CHECK_THROWS_AS(gradient_fd(std::vector<double>(5, 0.0), g), DimensionError);
  CHECK_THROWS_AS(laplacian_fd(std::vector<double>(11, 0.0), g), DimensionError);
  const auto tiny = Grid1D::uniform(0.0, 1.0, 2, false);
  CHECK_THROWS_AS(gradient_fd(std::vector<double>(2, 0.0), tiny), DomainError);
}
