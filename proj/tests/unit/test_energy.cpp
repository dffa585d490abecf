#include <doctest.h>

#include <random>

#include "hetreg/energy.hpp"
#include "hetreg/errors.hpp"
#include "test_support.hpp"

using namespace hetreg;
using hetreg::testing::random_vector;
using hetreg::testing::rel_err;
using hetreg::testing::uniform;

namespace {

// Independent evaluation with an explicit difference matrix.
double brute_force_energy(const std::vector<double>& mu, const std::vector<double>& lam, const std::vector<double>& y,
                          const Grid1D& g, const TermWeights& w) {
  const std::size_t n = g.n_total;
  std::vector<std::vector<double>> D(n, std::vector<double>(n, 0.0));
  D[0][0] = -1.0 / g.h;
  D[0][1] = 1.0 / g.h;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    D[i][i - 1] = -0.5 / g.h;
    D[i][i + 1] = 0.5 / g.h;
  }
  D[n - 1][n - 2] = -1.0 / g.h;
  D[n - 1][n - 1] = 1.0 / g.h;
  double data = 0.0;
  for (std::size_t i = g.first_interior(); i < g.end_interior(); ++i) {
    const double r = y[i] - mu[i];
    data += 0.5 * lam[i] * r * r - 0.5 * std::log(lam[i]);
  }
  double pm = 0.0;
  double pl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dm = 0.0;
    double dl = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dm += D[i][j] * mu[j];
      dl += D[i][j] * lam[j];
    }
    pm += dm * dm;
    pl += dl * dl;
  }
  return w.data * data + w.mean_penalty * pm + w.precision_penalty * pl;
}

struct Instance {
  Grid1D grid;
  std::vector<double> mu, lam, y;
};

Instance random_instance(std::mt19937_64& rng, std::size_t n_max = 64) {
  const std::size_t n = 3 + rng() % (n_max - 2);
  Instance in{Grid1D::uniform(0.0, uniform(rng, 0.5, 3.0), n), {}, {}, {}};
  in.mu = random_vector(rng, in.grid.n_total, -2.0, 2.0);
  in.lam = random_vector(rng, in.grid.n_total, 0.2, 3.0);
  in.y = random_vector(rng, in.grid.n_total, -2.0, 2.0);
  return in;
}

}  // namespace

TEST_CASE("RegPair domain") {
  CHECK_NOTHROW(RegPair::make(0.5, 0.0));
  CHECK_NOTHROW(RegPair::make(0.5, 1.0));
  CHECK_THROWS_AS(RegPair::make(1.0, 0.5), DomainError);
  CHECK_THROWS_AS(RegPair::make(0.0, 0.5), DomainError);
  CHECK_THROWS_AS(RegPair::make(0.5, 1.5), DomainError);
  CHECK_THROWS_AS(RegPair::make(std::nan(""), 0.5), DomainError);
  try {
    RegPair::make(1.0, 0.3);
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("no solution") != std::string::npos);
  }
}

TEST_CASE("alpha and beta") {
  const auto p = RegPair::make(0.2, 0.25);
  CHECK(p.alpha() == doctest::Approx(0.25 * 0.8 / 0.2));
  CHECK(p.beta() == doctest::Approx(0.75 * 0.8 / 0.2));
  const auto ab = reparam_to_alpha_beta(0.2, 0.25);
  CHECK(ab.alpha == p.alpha());
  CHECK(ab.beta == p.beta());
  CHECK(reparam_to_alpha_beta(0.5, 0.5).alpha == doctest::Approx(0.5));

  const auto d = diagonal_point(0.3);
  CHECK(d.rho() == 0.3);
  CHECK(d.gamma() == doctest::Approx(0.7));
  CHECK_THROWS_AS(diagonal_point(1.0), DomainError);
}

TEST_CASE("diagonal: sqrt(t alpha) = beta") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double t = uniform(rng, 1e-6, 1.0 - 1e-6);
    const auto p = diagonal_point(t);
    CHECK(rel_err(std::sqrt(t * p.alpha()), p.beta()) < 1e-12);
  }
}

TEST_CASE("term weights") {
  const auto w = TermWeights::from(RegPair::make(0.25, 0.4));
  CHECK(w.data == 0.25);
  CHECK(w.mean_penalty == doctest::Approx(0.75 * 0.4));
  CHECK(w.precision_penalty == doctest::Approx(0.75 * 0.6));
  const auto v = TermWeights::from(AlphaBeta{2.0, 3.0});
  CHECK(v.data == 1.0);
  CHECK(v.mean_penalty == 2.0);
  CHECK(v.precision_penalty == 3.0);
}

TEST_CASE("free energy matches a brute-force evaluation") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    auto in = random_instance(rng, 20);
    const TermWeights w{uniform(rng, 0.1, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)};
    const double got = free_energy(in.mu, in.lam, in.y, in.grid, w);
    CHECK(rel_err(got, brute_force_energy(in.mu, in.lam, in.y, in.grid, w)) < 1e-12);
  }
}

TEST_CASE("free energy special values") {
  const auto g = Grid1D::uniform(0.0, 1.0, 5);
  const std::vector<double> mu(g.n_total, 0.3);
  const std::vector<double> lam(g.n_total, 1.0);
  const auto& y = mu;
  // constant fields, perfect fit, unit precision
  CHECK(free_energy(mu, lam, y, g, RegPair::make(0.5, 0.5)) == 0.0);
  const std::vector<double> lam2(g.n_total, std::exp(2.0));
  CHECK(free_energy(mu, lam2, y, g, TermWeights{1.0, 0.0, 0.0}) == doctest::Approx(-5.0));

  std::vector<double> bad = lam;
  bad[2] = 0.0;
  CHECK_THROWS_AS(free_energy(mu, bad, y, g, TermWeights{}), DomainError);
  CHECK_THROWS_AS(free_energy(std::vector<double>(3, 0.0), lam, y, g, TermWeights{}), DimensionError);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(29);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(rng, 32);
    const auto reg = RegPair::make(uniform(rng, 0.05, 0.95), uniform(rng, 0.0, 1.0));
    const auto grad = free_energy_grad(in.mu, in.lam, in.y, in.grid, reg);
    for (std::size_t i = 0; i < in.grid.n_total; ++i) {
      for (int field = 0; field < 2; ++field) {
        auto& v = field == 0 ? in.mu : in.lam;
        const double saved = v[i];
        const double step = 1e-5 * std::max(1.0, std::abs(saved));
        v[i] = saved + step;
        const double fp = free_energy(in.mu, in.lam, in.y, in.grid, reg);
        v[i] = saved - step;
        const double fm = free_energy(in.mu, in.lam, in.y, in.grid, reg);
        v[i] = saved;
        const double fd = (fp - fm) / (2.0 * step);
        const double an = field == 0 ? grad.mu[i] : grad.lam[i];
        worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("objective and gradient scale by rho under the alpha-beta form") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    auto in = random_instance(rng, 16);
    const auto reg = RegPair::make(uniform(rng, 1e-3, 1.0 - 1e-3), uniform(rng, 0.0, 1.0));
    const auto ab = reparam_to_alpha_beta(reg.rho(), reg.gamma());
    const double lr = free_energy(in.mu, in.lam, in.y, in.grid, reg);
    const double la = free_energy(in.mu, in.lam, in.y, in.grid, TermWeights::from(ab));
    CHECK(rel_err(lr, reg.rho() * la, 1e-300) < 1e-12);
    const auto gr = free_energy_grad(in.mu, in.lam, in.y, in.grid, reg);
    const auto ga = free_energy_grad(in.mu, in.lam, in.y, in.grid, TermWeights::from(ab));
    for (std::size_t i = 0; i < gr.mu.size(); ++i) {
      CHECK(rel_err(gr.mu[i], reg.rho() * ga.mu[i], 1e-12) < 1e-10);
      CHECK(rel_err(gr.lam[i], reg.rho() * ga.lam[i], 1e-12) < 1e-10);
    }
  }
}

TEST_CASE("stationarity residuals") {
  const auto g = Grid1D::uniform(0.0, 1.0, 16);
  std::mt19937_64 rng(37);
  const auto y = random_vector(rng, g.n_total);

  SUBCASE("zero residual and flat precision leave res2 = -1/lam") {
    FTSolution s;
    s.mu = y;
    s.lam.assign(g.n_total, 2.5);
    s.reg = RegPair::make(0.5, 0.5);
    const auto res = stationarity_residuals(s, y, g);
    REQUIRE(res.res2.size() == g.n_interior);
    for (double r : res.res2) CHECK(r == -1.0 / 2.5);
  }
  SUBCASE("constituent terms add up") {
    FTSolution s;
    s.mu = random_vector(rng, g.n_total);
    s.lam = random_vector(rng, g.n_total, 0.5, 2.0);
    s.reg = RegPair::make(0.3, 0.6);
    const auto res = stationarity_residuals(s, y, g);
    for (std::size_t k = 0; k < g.n_interior; ++k) {
      CHECK(res.res1[k] == doctest::Approx(res.precision_residual[k] - res.mean_curvature[k]));
      CHECK(res.res2[k] ==
            doctest::Approx(res.squared_residual[k] - res.variance[k] - res.precision_curvature[k]));
    }
  }
  SUBCASE("on a unit-length domain the residuals are rescaled energy gradients") {
    FTSolution s;
    s.mu = random_vector(rng, g.n_total);
    s.lam = random_vector(rng, g.n_total, 0.5, 2.0);
    s.reg = RegPair::make(0.4, 0.7);
    const auto res = stationarity_residuals(s, y, g);
    const auto grad = free_energy_grad(s.mu, s.lam, y, g, s.reg);
    for (std::size_t k = 0; k < g.n_interior; ++k) {
      const std::size_t i = g.first_interior() + k;
      CHECK(res.res1[k] == doctest::Approx(grad.mu[i] / s.reg.rho()).epsilon(1e-9));
      CHECK(res.res2[k] == doctest::Approx(2.0 * grad.lam[i] / s.reg.rho()).epsilon(1e-9));
    }
  }
}

TEST_CASE("FTSolution JSON round trip") {
  FTSolution s;
  s.mu = {0.1, 0.2, 0.3};
  s.lam = {1.0, 2.0, 3.0};
  s.trace.resize(250);
  for (std::size_t i = 0; i < s.trace.size(); ++i) s.trace[i] = 1.0 / static_cast<double>(i + 1);
  s.reg = RegPair::make(0.25, 0.75);
  s.converged = true;
  s.seed = 42;
  s.n_ft = 1;
  const auto j = to_json(s);
  const auto back = ft_solution_from_json(j);
  CHECK(back.mu == s.mu);
  CHECK(back.lam == s.lam);
  CHECK(back.reg == s.reg);
  CHECK(back.seed == 42);
  CHECK(back.converged);
  CHECK(to_json(back, 100)["mu"] == j["mu"]);
}
