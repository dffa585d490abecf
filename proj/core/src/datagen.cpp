#include "hetreg/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "hetreg/errors.hpp"

namespace hetreg {

Family parse_family(std::string_view name) {
  if (name == "sine") return Family::sine;
  if (name == "cubic") return Family::cubic;
  if (name == "curve") return Family::curve;
  throw DomainError("unknown dataset family '" + std::string(name) +
                    "' (expected sine, cubic or curve)");
}

std::string_view to_string(Family f) {
  switch (f) {
    case Family::sine: return "sine";
    case Family::cubic: return "cubic";
    case Family::curve: return "curve";
  }
  return "?";
}

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

Interval family_domain(Family f) {
  switch (f) {
    case Family::sine: return {0.0, 1.0};
    case Family::cubic: return {-1.0, 1.0};
    case Family::curve: return {-1.5, 1.5};
  }
  return {};
}

double family_mean(Family f, double x) {
  switch (f) {
    case Family::sine: return 2.0 * std::sin(4.0 * std::numbers::pi * x);
    case Family::cubic: return x * x * x;
    case Family::curve: return x - 2.0 * x * x + 0.5 * x * x * x;
  }
  return 0.0;
}

double family_noise_scale(Family f, double x, bool heteroskedastic) {
  if (!heteroskedastic) return 1.0;
  switch (f) {
    case Family::sine: return std::sin(6.0 * std::numbers::pi * x) + 1.25;
    case Family::cubic:
      if (x < -0.5) return 0.1;
      if (x < 0.0) return 1.0;
      if (x < 0.5) return 3.0;
      return 10.0;
    case Family::curve: return x + 1.5;
  }
  return 1.0;
}

ColumnStats column_stats(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw DomainError("column_stats: empty column");
  ColumnStats s;
  s.mean = v.mean();
  const double var = (v.array() - s.mean).square().mean();
  s.std = std::sqrt(var);
  // Constant columns are centred but left unscaled.
  if (!(s.std > 0.0)) s.std = 1.0;
  return s;
}

Dataset to_raw(const Dataset& d) {
  Dataset raw = d;
  for (Eigen::Index j = 0; j < raw.x.cols(); ++j) {
    const auto& st = d.x_stats[static_cast<std::size_t>(j)];
    raw.x.col(j) = raw.x.col(j).array() * st.std + st.mean;
    raw.x_stats[static_cast<std::size_t>(j)] = ColumnStats{};
  }
  raw.y = raw.y.array() * d.y_stats.std + d.y_stats.mean;
  raw.y_stats = ColumnStats{};
  return raw;
}

void restandardize(Dataset& d, const std::vector<ColumnStats>& x_stats, const ColumnStats& y_stats) {
  if (x_stats.size() != d.dims()) {
    throw DimensionError("restandardize: statistics for " + std::to_string(x_stats.size()) +
                         " columns, dataset has " + std::to_string(d.dims()));
  }
  d = to_raw(d);
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
    const auto& st = x_stats[static_cast<std::size_t>(j)];
    d.x.col(j) = (d.x.col(j).array() - st.mean) / st.std;
  }
  d.y = (d.y.array() - y_stats.mean) / y_stats.std;
  d.x_stats = x_stats;
  d.y_stats = y_stats;
}

void standardize(Dataset& d) {
  Dataset raw = to_raw(d);
  std::vector<ColumnStats> xs(raw.dims());
  for (Eigen::Index j = 0; j < raw.x.cols(); ++j) xs[static_cast<std::size_t>(j)] = column_stats(raw.x.col(j));
  const ColumnStats ys = column_stats(raw.y);
  restandardize(d, xs, ys);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

Dataset sample_raw(const SyntheticSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Interval dom = spec.domain();
  std::uniform_real_distribution<double> ux(dom.lo, dom.hi);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(spec.n_points), 1);
  d.y.resize(static_cast<Eigen::Index>(spec.n_points));
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    const double x = ux(rng);
    d.x(i, 0) = x;
    d.y(i) = family_mean(spec.family, x) +
             family_noise_scale(spec.family, x, spec.heteroskedastic) * noise(rng);
  }
  d.x_stats.assign(1, ColumnStats{});
  d.feature_names = {"x"};
  d.seed = seed;
  d.spec = spec;
  return d;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_points < 2) {
    throw DomainError("generate_synthetic: need at least 2 points to standardize");
  }
  Dataset d = sample_raw(spec, spec.seed);
  standardize(d);
  return d;
}

TrainTest generate_synthetic_pair(const SyntheticSpec& spec) {
  TrainTest tt;
  tt.train = generate_synthetic(spec);
  tt.test = sample_raw(spec, derive_seed(spec.seed, 1));
  tt.test.split = Split::test;
  restandardize(tt.test, tt.train.x_stats, tt.train.y_stats);
  return tt;
}

namespace {

std::vector<double> raw_field(const Grid1D& grid, const SyntheticSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> y(grid.n_total);
  for (std::size_t i = 0; i < grid.n_total; ++i) {
    const double x = grid.points[i];
    y[i] = family_mean(spec.family, x) +
           family_noise_scale(spec.family, x, spec.heteroskedastic) * noise(rng);
  }
  return y;
}

}  // namespace

FTGrid make_ft_grid(std::size_t n_ft, const SyntheticSpec& family, std::uint64_t seed,
                    std::size_t n_train) {
  if (n_ft < 8) throw DomainError("make_ft_grid: n_ft must be at least 8");
  if (n_train > n_ft) {
    throw DomainError("make_ft_grid: cannot select " + std::to_string(n_train) +
                      " training points from " + std::to_string(n_ft) + " grid points");
  }
  FTGrid ft;
  ft.spec = family;
  ft.seed = seed;
  const Interval dom = family.domain();
  ft.grid = Grid1D::uniform(dom.lo, dom.hi, n_ft, true);

  ft.y_field = raw_field(ft.grid, family, derive_seed(seed, 10));
  const Eigen::Map<const Eigen::VectorXd> interior(ft.y_field.data() + ft.grid.first_interior(),
                                                   static_cast<Eigen::Index>(n_ft));
  ft.y_stats = column_stats(interior);
  for (double& v : ft.y_field) v = (v - ft.y_stats.mean) / ft.y_stats.std;

  std::vector<std::size_t> idx(n_ft);
  std::iota(idx.begin(), idx.end(), ft.grid.first_interior());
  std::mt19937_64 rng(derive_seed(seed, 11));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n_train);
  std::sort(idx.begin(), idx.end());
  ft.train_indices = std::move(idx);
  return ft;
}

std::vector<double> resample_field(const FTGrid& ft, std::uint64_t seed) {
  auto y = raw_field(ft.grid, ft.spec, derive_seed(seed, 12));
  for (double& v : y) v = (v - ft.y_stats.mean) / ft.y_stats.std;
  return y;
}

Dataset ft_train_subset(const FTGrid& ft) {
  if (ft.train_indices.size() < 2) throw DomainError("ft_train_subset: fewer than 2 training indices");
  Dataset d;
  const auto n = static_cast<Eigen::Index>(ft.train_indices.size());
  d.x.resize(n, 1);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t k = ft.train_indices[static_cast<std::size_t>(i)];
    d.x(i, 0) = ft.grid.points[k];
    d.y(i) = ft.y_field[k] * ft.y_stats.std + ft.y_stats.mean;
  }
  d.x_stats.assign(1, ColumnStats{});
  d.feature_names = {"x"};
  d.seed = ft.seed;
  d.spec = ft.spec;
  standardize(d);
  return d;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::string_view target_column,
                 bool standardize_columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV file '" + path.string() + "' has no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  std::optional<std::size_t> target;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] != target_column) continue;
    if (target) throw SchemaError("target column '" + std::string(target_column) + "' appears more than once");
    target = j;
  }
  if (!target) throw SchemaError("target column '" + std::string(target_column) + "' not found in header");
  if (header.size() < 2) throw SchemaError("CSV needs at least one feature column besides the target");

  std::vector<std::vector<double>> rows;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row_no;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                           " cells, header has " + std::to_string(header.size()),
                       row_no, cells.size());
    }
    std::vector<double> vals(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string c = trim(cells[j]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || ec != std::errc{} || ptr != c.data() + c.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric cell '" + c + "' at row " + std::to_string(row_no) +
                             ", column '" + header[j] + "'",
                         row_no, j + 1);
      }
      vals[j] = v;
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw SchemaError("CSV file '" + path.string() + "' has no data rows");

  Dataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto dim = static_cast<Eigen::Index>(header.size() - 1);
  d.x.resize(n, dim);
  d.y.resize(n);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != *target) d.feature_names.push_back(header[j]);
  }
  d.target_name = std::string(target_column);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j == *target) {
        d.y(i) = r[j];
      } else {
        d.x(i, col++) = r[j];
      }
    }
  }
  d.x_stats.assign(static_cast<std::size_t>(dim), ColumnStats{});
  if (standardize_columns) standardize(d);
  return d;
}

TrainTest split_train_test(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DomainError("split_train_test: test_fraction must lie in (0, 1)");
  }
  const std::size_t n = dataset.rows();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test >= n) {
    throw DomainError("split_train_test: fraction " + fmt::format("{}", test_fraction) + " on " +
                      std::to_string(n) + " rows leaves an empty split");
  }
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  const Dataset raw = to_raw(dataset);
  auto take = [&](std::size_t begin, std::size_t end, Split split) {
    Dataset d = raw;
    const auto m = static_cast<Eigen::Index>(end - begin);
    d.x.resize(m, raw.x.cols());
    d.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index src = perm[begin + static_cast<std::size_t>(i)];
      d.x.row(i) = raw.x.row(src);
      d.y(i) = raw.y(src);
    }
    d.split = split;
    d.seed = seed;
    return d;
  };

  TrainTest tt;
  tt.train = take(0, n - n_test, Split::train);
  tt.test = take(n - n_test, n, Split::test);
  standardize(tt.train);
  restandardize(tt.test, tt.train.x_stats, tt.train.y_stats);
  return tt;
}

namespace {

nlohmann::json stats_json(const ColumnStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }
ColumnStats stats_from(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

}  // namespace

nlohmann::json to_json(const Dataset& d) {
  nlohmann::json x = nlohmann::json::array();
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) row.push_back(d.x(i, j));
    x.push_back(std::move(row));
  }
  nlohmann::json xs = nlohmann::json::array();
  for (const auto& s : d.x_stats) xs.push_back(stats_json(s));

  nlohmann::json spec = nullptr;
  if (d.spec) {
    spec = {{"family", std::string(to_string(d.spec->family))},
            {"heteroskedastic", d.spec->heteroskedastic},
            {"n_points", d.spec->n_points},
            {"seed", d.spec->seed}};
  }
  return {{"x", std::move(x)},
          {"y", std::vector<double>(d.y.data(), d.y.data() + d.y.size())},
          {"stats", {{"x", std::move(xs)}, {"y", stats_json(d.y_stats)}}},
          {"seed", d.seed},
          {"split", std::string(to_string(d.split))},
          {"feature_names", d.feature_names},
          {"target_name", d.target_name},
          {"spec", std::move(spec)}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
  try {
    Dataset d;
    const auto& x = j.at("x");
    const auto y = j.at("y").get<std::vector<double>>();
    const auto n = static_cast<Eigen::Index>(y.size());
    if (static_cast<Eigen::Index>(x.size()) != n) throw SchemaError("dataset JSON: x and y row counts differ");
    const Eigen::Index dim = n > 0 ? static_cast<Eigen::Index>(x.at(0).size()) : 0;
    d.x.resize(n, dim);
    d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = x.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != dim) throw SchemaError("dataset JSON: ragged x");
      for (Eigen::Index c = 0; c < dim; ++c) d.x(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    for (const auto& s : j.at("stats").at("x")) d.x_stats.push_back(stats_from(s));
    d.y_stats = stats_from(j.at("stats").at("y"));
    if (d.x_stats.size() != static_cast<std::size_t>(dim)) throw SchemaError("dataset JSON: stats/x width mismatch");
    d.seed = j.at("seed").get<std::uint64_t>();
    d.split = j.value("split", std::string("train")) == "test" ? Split::test : Split::train;
    d.feature_names = j.value("feature_names", std::vector<std::string>{});
    d.target_name = j.value("target_name", std::string("y"));
    if (j.contains("spec") && !j.at("spec").is_null()) {
      const auto& s = j.at("spec");
      d.spec = SyntheticSpec{parse_family(s.at("family").get<std::string>()), s.at("heteroskedastic").get<bool>(),
                             s.at("n_points").get<std::size_t>(), s.at("seed").get<std::uint64_t>()};
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("dataset JSON: ") + e.what());
  }
}

}  // namespace hetreg
