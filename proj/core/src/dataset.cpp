#include "spudrf/dataset.hpp"

#include "spudrf/errors.hpp"
#include "spudrf/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>

namespace spudrf {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string line_prefix(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

double parse_double(std::string_view cell, std::size_t line_no) {
  cell = trim(cell);
  double value = 0.0;
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc{} || ptr != last)
    throw ParseError(line_prefix(line_no) + "non-numeric value '" + std::string(cell) + "'");
  if (!std::isfinite(value))
    throw ParseError(line_prefix(line_no) + "non-finite value '" + std::string(cell) + "'");
  return value;
}

std::int64_t parse_id(std::string_view cell, std::size_t line_no) {
  cell = trim(cell);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size())
    throw ParseError(line_prefix(line_no) + "invalid id '" + std::string(cell) + "'");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void Dataset::validate() const {
  std::unordered_set<std::int64_t> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.features.size() != feature_dim)
      throw InputError("sample " + std::to_string(s.id) + " has " +
                       std::to_string(s.features.size()) + " features, expected " +
                       std::to_string(feature_dim));
    if (!std::isfinite(s.target)) throw InputError("sample " + std::to_string(s.id) + " has a non-finite target");
    for (double x : s.features)
      if (!std::isfinite(x)) throw InputError("sample " + std::to_string(s.id) + " has a non-finite feature");
    if (!ids.insert(s.id).second) throw InputError("duplicate sample id " + std::to_string(s.id));
  }
}

Eigen::MatrixXd Dataset::feature_matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = 0; j < feature_dim; ++j)
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = samples[i].features[j];
  return m;
}

std::vector<double> Dataset::targets() const {
  std::vector<double> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(s.target);
  return y;
}

std::int64_t Dataset::max_id() const {
  std::int64_t m = -1;
  for (const auto& s : samples) m = std::max(m, s.id);
  return m;
}

void SyntheticSpec::validate() const {
  if (n < 10) throw ConfigError("synthetic.n must be at least 10");
  if (feature_dim == 0) throw ConfigError("synthetic.feature_dim must be positive");
  if (!(rare_mass > 0.0 && rare_mass < 0.5)) throw ConfigError("synthetic.rare_mass must lie in (0, 0.5)");
  if (!(noise_sd >= 0.0)) throw ConfigError("synthetic.noise_sd must be non-negative");
  if (!(majority_sd > 0.0)) throw ConfigError("synthetic.majority_sd must be positive");
  if (!(lower < upper)) throw ConfigError("synthetic.lower must be below synthetic.upper");
  if (!(rare_low < rare_high)) throw ConfigError("synthetic.rare_low must be below synthetic.rare_high");
}

double feature_map(double y, std::size_t j) {
  const double k = static_cast<double>(j + 1);
  return std::sin(2.0 * std::numbers::pi * k * y / kFeaturePeriod + k * std::numbers::pi / 4.0);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> majority(spec.majority_mean, spec.majority_sd);
  std::uniform_real_distribution<double> rare(spec.rare_low, spec.rare_high);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset data;
  data.feature_dim = spec.feature_dim;
  data.samples.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    double y;
    if (unit(rng) < spec.rare_mass) {
      y = rare(rng);
    } else {
      do {
        y = majority(rng);
      } while (y < spec.lower || y > spec.upper);
    }
    Sample s;
    s.id = static_cast<std::int64_t>(i);
    s.target = y;
    s.features.resize(spec.feature_dim);
    for (std::size_t j = 0; j < spec.feature_dim; ++j)
      s.features[j] = feature_map(y, j) + spec.noise_sd * noise(rng);
    data.samples.push_back(std::move(s));
  }
  return data;
}

TrainTestSplit split_train_test(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  const auto n = data.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, streams::kSplit));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  std::vector<std::uint8_t> in_train(n, 0);
  for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = 1;

  TrainTestSplit out;
  out.train.feature_dim = out.test.feature_dim = data.feature_dim;
  for (std::size_t i = 0; i < n; ++i)
    (in_train[i] ? out.train : out.test).samples.push_back(data.samples[i]);
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "id,y";
  for (std::size_t j = 0; j < data.feature_dim; ++j) out << ",x" << j;
  out << '\n';
  for (const auto& s : data.samples) {
    out << s.id << ',' << format_double(s.target);
    for (double x : s.features) out << ',' << format_double(x);
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": line 1: missing header");
  const auto header = split_fields(trim(line));
  if (header.size() < 2 || trim(header[0]) != "id" || trim(header[1]) != "y")
    throw ParseError(path.string() + ": line 1: header must start with 'id,y'");
  for (std::size_t j = 2; j < header.size(); ++j)
    if (trim(header[j]) != "x" + std::to_string(j - 2))
      throw ParseError(path.string() + ": line 1: expected column 'x" + std::to_string(j - 2) +
                       "', found '" + std::string(trim(header[j])) + "'");

  Dataset data;
  data.feature_dim = header.size() - 2;
  std::unordered_set<std::int64_t> ids;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      const auto t = trim(line);
      if (t.empty()) continue;
      const auto fields = split_fields(t);
      if (fields.size() != header.size())
        throw ParseError(line_prefix(line_no) + "expected " + std::to_string(header.size()) +
                         " fields, found " + std::to_string(fields.size()));
      Sample s;
      s.id = parse_id(fields[0], line_no);
      s.target = parse_double(fields[1], line_no);
      s.features.reserve(data.feature_dim);
      for (std::size_t j = 2; j < fields.size(); ++j) s.features.push_back(parse_double(fields[j], line_no));
      if (!ids.insert(s.id).second)
        throw ParseError(line_prefix(line_no) + "duplicate id " + std::to_string(s.id));
      data.samples.push_back(std::move(s));
    }
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return data;
}

}  // namespace spudrf
