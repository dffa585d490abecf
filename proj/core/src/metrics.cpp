#include "hetreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "hetreg/errors.hpp"

namespace hetreg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_same(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty()) throw DomainError(std::string(what) + ": empty input");
  if (a.size() != b.size()) throw DimensionError(std::string(what) + ": input lengths differ");
}

void check_positive(std::span<const double> lam, const char* what) {
  for (double l : lam) {
    if (!(l > 0.0)) throw DomainError(std::string(what) + ": precision must be strictly positive");
  }
}

}  // namespace

MetricsRecord MetricsRecord::diverged_cell(double rho, double gamma, std::uint64_t seed, Split split) {
  MetricsRecord r;
  r.rho = rho;
  r.gamma = gamma;
  r.seed = seed;
  r.split = split;
  r.mu_mse = r.lam_inv_sqrt_mse = r.gc_mu = r.gc_lam = r.ece = r.nll = kNaN;
  r.diverged = true;
  return r;
}

double mu_mse(std::span<const double> pred_mu, std::span<const double> y) {
  check_same(pred_mu, y, "mu_mse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = pred_mu[i] - y[i];
    s += r * r;
  }
  return s / static_cast<double>(y.size());
}

double lam_inv_sqrt_mse(std::span<const double> pred_lam, std::span<const double> pred_mu,
                        std::span<const double> y) {
  check_same(pred_mu, y, "lam_inv_sqrt_mse");
  check_same(pred_lam, y, "lam_inv_sqrt_mse");
  check_positive(pred_lam, "lam_inv_sqrt_mse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = 1.0 / std::sqrt(pred_lam[i]) - std::abs(pred_mu[i] - y[i]);
    s += d * d;
  }
  return s / static_cast<double>(y.size());
}

std::vector<double> default_ece_levels() {
  std::vector<double> q;
  for (int k = 1; k <= 19; ++k) q.push_back(0.05 * k);
  return q;
}

double ece(std::span<const double> pred_mu, std::span<const double> pred_lam, std::span<const double> y,
           std::span<const double> levels) {
  check_same(pred_mu, y, "ece");
  check_same(pred_lam, y, "ece");
  check_positive(pred_lam, "ece");
  if (y.size() < 20) throw DomainError("ece: need at least 20 points, got " + std::to_string(y.size()));
  if (levels.empty()) throw DomainError("ece: no coverage levels");

  const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
  double total = 0.0;
  for (double q : levels) {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("ece: coverage levels must lie in (0, 1)");
    const double z = boost::math::quantile(std_normal, 0.5 * (1.0 + q));
    std::size_t inside = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double sigma = 1.0 / std::sqrt(pred_lam[i]);
      if (std::abs(y[i] - pred_mu[i]) <= z * sigma) ++inside;
    }
    total += std::abs(static_cast<double>(inside) / static_cast<double>(y.size()) - q);
  }
  return total / static_cast<double>(levels.size());
}

double ece(std::span<const double> pred_mu, std::span<const double> pred_lam, std::span<const double> y) {
  const auto levels = default_ece_levels();
  return ece(pred_mu, pred_lam, y, levels);
}

double gaussian_nll(std::span<const double> pred_mu, std::span<const double> pred_lam,
                    std::span<const double> y) {
  check_same(pred_mu, y, "gaussian_nll");
  check_same(pred_lam, y, "gaussian_nll");
  check_positive(pred_lam, "gaussian_nll");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = pred_mu[i] - y[i];
    s += 0.5 * pred_lam[i] * r * r - 0.5 * std::log(pred_lam[i]);
  }
  return s / static_cast<double>(y.size());
}

MetricsRecord evaluate_ft(const FTSolution& solution, const Grid1D& grid, std::span<const double> y_field,
                          Split split) {
  if (y_field.size() != grid.n_total || solution.mu.size() != grid.n_total) {
    throw DimensionError("evaluate_ft: field lengths do not match the grid");
  }
  const std::size_t a = grid.first_interior();
  const std::size_t n = grid.n_interior;
  const auto mu = std::span<const double>(solution.mu).subspan(a, n);
  const auto lam = std::span<const double>(solution.lam).subspan(a, n);
  const auto y = y_field.subspan(a, n);

  MetricsRecord r;
  r.rho = solution.reg.rho();
  r.gamma = solution.reg.gamma();
  r.seed = solution.seed;
  r.split = split;
  r.mu_mse = mu_mse(mu, y);
  r.lam_inv_sqrt_mse = lam_inv_sqrt_mse(lam, mu, y);
  r.gc_mu = dirichlet_energy(solution.mu, grid);
  r.gc_lam = dirichlet_energy(solution.lam, grid);
  r.ece = n >= 20 ? ece(mu, lam, y) : kNaN;
  r.nll = gaussian_nll(mu, lam, y);
  return r;
}

double model_geometric_complexity(const MLP& net, const Eigen::MatrixXd& x, std::size_t dense_points) {
  if (x.rows() == 0) throw DomainError("model_geometric_complexity: no points");
  if (x.cols() == 1) {
    const double lo = x.col(0).minCoeff();
    const double hi = x.col(0).maxCoeff();
    if (!(hi > lo)) return 0.0;
    const Grid1D grid = Grid1D::uniform(lo, hi, std::max<std::size_t>(dense_points, 3), false);
    const Eigen::Map<const Eigen::VectorXd> pts(grid.points.data(), static_cast<Eigen::Index>(grid.n_total));
    const Eigen::VectorXd f = net.forward_batch(Eigen::MatrixXd(pts));
    return dirichlet_energy(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), grid);
  }

  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  std::vector<double> grads(static_cast<std::size_t>(n * d));
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> col(x.col(j).data(), x.col(j).data() + n);
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    Eigen::MatrixXd plus = x;
    Eigen::MatrixXd minus = x;
    std::vector<double> step(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto it = std::lower_bound(col.begin(), col.end(), x(i, j));
      double gap = std::numeric_limits<double>::infinity();
      if (it != col.begin()) gap = std::min(gap, *it - *std::prev(it));
      if (std::next(it) != col.end()) gap = std::min(gap, *std::next(it) - *it);
      if (!std::isfinite(gap) || !(gap > 0.0)) gap = 1e-3;
      step[static_cast<std::size_t>(i)] = gap;
      plus(i, j) += gap;
      minus(i, j) -= gap;
    }
    const Eigen::VectorXd fp = net.forward_batch(plus);
    const Eigen::VectorXd fm = net.forward_batch(minus);
    for (Eigen::Index i = 0; i < n; ++i) {
      grads[static_cast<std::size_t>(i * d + j)] = (fp(i) - fm(i)) / (2.0 * step[static_cast<std::size_t>(i)]);
    }
  }
  return geometric_complexity(grads, static_cast<std::size_t>(d));
}

MetricsRecord evaluate_mlp(const TrainResult& model, const Dataset& data) {
  const Prediction p = predict(model, data.x);
  const auto n = static_cast<std::size_t>(data.y.size());
  const std::span<const double> mu(p.mu.data(), n);
  const std::span<const double> lam(p.lam.data(), n);
  const std::span<const double> y(data.y.data(), n);

  MetricsRecord r;
  r.rho = model.reg.rho();
  r.gamma = model.reg.gamma();
  r.seed = model.seed;
  r.split = data.split;
  r.mu_mse = mu_mse(mu, y);
  r.lam_inv_sqrt_mse = lam_inv_sqrt_mse(lam, mu, y);
  r.gc_mu = model_geometric_complexity(model.mean_net, data.x);
  r.gc_lam = model_geometric_complexity(model.precision_net, data.x);
  r.ece = n >= 20 ? ece(mu, lam, y) : kNaN;
  r.nll = gaussian_nll(mu, lam, y);
  return r;
}

std::string metrics_csv_header() {
  return "rho,gamma,seed,split,mu_mse,lam_inv_sqrt_mse,gc_mu,gc_lam,ece,nll,diverged";
}

namespace {

std::string num(double v) { return std::isnan(v) ? std::string() : fmt::format("{}", v); }

double parse_num(const std::string& s, std::size_t row, std::size_t col) {
  if (s.empty()) return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("metrics CSV: bad number '" + s + "'", row, col);
  }
}

}  // namespace

std::string to_csv_row(const MetricsRecord& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", num(r.rho), num(r.gamma), r.seed, to_string(r.split),
                     num(r.mu_mse), num(r.lam_inv_sqrt_mse), num(r.gc_mu), num(r.gc_lam), num(r.ece),
                     num(r.nll), r.diverged ? "true" : "false");
}

MetricsRecord parse_metrics_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  if (cells.size() != 11) throw ParseError("metrics CSV: expected 11 columns, got " + std::to_string(cells.size()), 0, cells.size());
  MetricsRecord r;
  r.rho = parse_num(cells[0], 0, 1);
  r.gamma = parse_num(cells[1], 0, 2);
  try {
    r.seed = std::stoull(cells[2]);
  } catch (const std::exception&) {
    throw ParseError("metrics CSV: bad seed '" + cells[2] + "'", 0, 3);
  }
  if (cells[3] == "train") {
    r.split = Split::train;
  } else if (cells[3] == "test") {
    r.split = Split::test;
  } else {
    throw ParseError("metrics CSV: bad split '" + cells[3] + "'", 0, 4);
  }
  r.mu_mse = parse_num(cells[4], 0, 5);
  r.lam_inv_sqrt_mse = parse_num(cells[5], 0, 6);
  r.gc_mu = parse_num(cells[6], 0, 7);
  r.gc_lam = parse_num(cells[7], 0, 8);
  r.ece = parse_num(cells[8], 0, 9);
  r.nll = parse_num(cells[9], 0, 10);
  r.diverged = cells[10] == "true";
  return r;
}

std::string to_csv(std::span<const MetricsRecord> rows) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& r : rows) {
    out += to_csv_row(r);
    out += '\n';
  }
  return out;
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics CSV '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header()) {
    throw SchemaError("metrics CSV '" + path.string() + "' has an unexpected header");
  }
  std::vector<MetricsRecord> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    try {
      rows.push_back(parse_metrics_row(line));
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (row " + std::to_string(row) + ")", row, e.column());
    }
  }
  return rows;
}

}  // namespace hetreg
