#include "spudrf/dataset.hpp"
#include "spudrf/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using namespace spudrf;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("spudrf_ds_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::set<std::int64_t> ids(const Dataset& d) {
  std::set<std::int64_t> s;
  for (const auto& x : d.samples) s.insert(x.id);
  return s;
}

// Exact binomial tail bounds: smallest lo with P(X < lo) <= a, largest hi
// with P(X > hi) <= a.
std::pair<int, int> binomial_interval(int n, double p, double a) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k)
    pmf[static_cast<std::size_t>(k)] =
        std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                 (n - k) * std::log1p(-p));
  int lo = 0;
  double tail = 0.0;
  while (tail + pmf[static_cast<std::size_t>(lo)] <= a) tail += pmf[static_cast<std::size_t>(lo++)];
  int hi = n;
  tail = 0.0;
  while (tail + pmf[static_cast<std::size_t>(hi)] <= a) tail += pmf[static_cast<std::size_t>(hi--)];
  return {lo, hi};
}

}  // namespace

TEST(Synthetic, ZeroNoiseClosedForm) {
  EXPECT_DOUBLE_EQ(feature_map(0.0, 0), std::sin(std::numbers::pi / 4.0));
  for (std::size_t j = 0; j < 8; ++j)
    EXPECT_NEAR(feature_map(0.0, j), std::sin((j + 1.0) * std::numbers::pi / 4.0), 1e-15);

  SyntheticSpec spec;
  spec.n = 50;
  spec.noise_sd = 0.0;
  const auto d = generate_synthetic(spec);
  for (const auto& s : d.samples)
    for (std::size_t j = 0; j < spec.feature_dim; ++j) EXPECT_DOUBLE_EQ(s.features[j], feature_map(s.target, j));
}

TEST(Synthetic, TargetsInRangeAndDeterministic) {
  SyntheticSpec spec;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 2000u);
  EXPECT_EQ(a.feature_dim, 8u);
  for (const auto& s : a.samples) {
    EXPECT_GE(s.target, 0.0);
    EXPECT_LE(s.target, 80.0);
    EXPECT_FALSE(s.origin_id.has_value());
  }
  spec.seed = 1;
  EXPECT_NE(generate_synthetic(spec), a);
  EXPECT_NO_THROW(a.validate());
}

TEST(Synthetic, RareCountWithinBinomialInterval) {
  const auto [lo, hi] = binomial_interval(2000, 0.05, 0.0005);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const auto d = generate_synthetic(spec);
    const auto rare = std::count_if(d.samples.begin(), d.samples.end(), [](const Sample& s) { return s.target >= 60.0; });
    EXPECT_GE(rare, lo) << seed;
    EXPECT_LE(rare, hi) << seed;
  }
}

TEST(Synthetic, HistogramShowsImbalance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const auto d = generate_synthetic(spec);
    std::vector<int> bins(17, 0);
    for (const auto& s : d.samples) ++bins[static_cast<std::size_t>(std::floor(s.target / 5.0))];
    const double rare_mean = (bins[12] + bins[13] + bins[14] + bins[15] + bins[16]) / 4.0;  // 80 folds into [75, 80]
    const int peak = *std::max_element(bins.begin(), bins.end());
    EXPECT_GE(peak, 5.0 * rare_mean) << seed;
  }
}

TEST(Synthetic, RejectsInvalidSpec) {
  SyntheticSpec spec;
  spec.rare_mass = 0.5;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
  spec = {};
  spec.n = 9;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

TEST(Split, SizesAndPartition) {
  SyntheticSpec spec;
  spec.n = 10;
  const auto d = generate_synthetic(spec);
  const auto s = split_train_test(d, 0.8, 0);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
  auto all = ids(s.train);
  const auto t = ids(s.test);
  for (auto i : t) EXPECT_FALSE(all.count(i));
  all.insert(t.begin(), t.end());
  EXPECT_EQ(all, ids(d));
}

TEST(Split, SeedsGiveDistinctSplitsAndPreserveOrder) {
  SyntheticSpec spec;
  spec.n = 200;
  const auto d = generate_synthetic(spec);
  std::set<std::set<std::int64_t>> seen;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = split_train_test(d, 0.8, seed);
    seen.insert(ids(s.test));
    EXPECT_TRUE(std::is_sorted(s.train.samples.begin(), s.train.samples.end(),
                               [](const Sample& a, const Sample& b) { return a.id < b.id; }));
    EXPECT_EQ(split_train_test(d, 0.8, seed).test, s.test);
  }
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_THROW(split_train_test(d, 1.0, 0), ConfigError);
}

TEST(Csv, RoundTripIsLossless) {
  TempDir dir;
  SyntheticSpec spec;
  spec.n = 100;
  const auto d = generate_synthetic(spec);
  save_csv(d, dir.path() / "d.csv");
  EXPECT_EQ(load_csv(dir.path() / "d.csv"), d);
  std::ifstream in(dir.path() / "d.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "id,y,x0,x1,x2,x3,x4,x5,x6,x7");
}

TEST(Csv, RaggedRowNamesLine) {
  TempDir dir;
  std::string text = "id,y,x0,x1,x2,x3,x4,x5,x6,x7\n";
  for (int i = 0; i < 5; ++i) text += std::to_string(i) + ",1,0,0,0,0,0,0,0,0\n";
  text += "5,1,0,0,0,0,0,0,0\n";  // line 7: 9 fields
  write(dir.path() / "bad.csv", text);
  try {
    load_csv(dir.path() / "bad.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 7: expected 10 fields, found 9"), std::string::npos) << e.what();
  }
}

TEST(Csv, RejectsNonFiniteAndNonNumeric) {
  TempDir dir;
  write(dir.path() / "nan.csv", "id,y,x0\n0,NaN,1\n");
  EXPECT_THROW(load_csv(dir.path() / "nan.csv"), ParseError);
  write(dir.path() / "inf.csv", "id,y,x0\n0,1,inf\n");
  EXPECT_THROW(load_csv(dir.path() / "inf.csv"), ParseError);
  write(dir.path() / "abc.csv", "id,y,x0\n0,1,abc\n");
  try {
    load_csv(dir.path() / "abc.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  write(dir.path() / "hdr.csv", "idx,y,x0\n0,1,2\n");
  EXPECT_THROW(load_csv(dir.path() / "hdr.csv"), ParseError);
  write(dir.path() / "dup.csv", "id,y,x0\n0,1,2\n0,1,2\n");
  EXPECT_THROW(load_csv(dir.path() / "dup.csv"), ParseError);
  EXPECT_THROW(load_csv(dir.path() / "missing.csv"), IoError);
}

TEST(DatasetBasics, MatrixAndValidation) {
  Dataset d;
  d.feature_dim = 2;
  d.samples = {{3, {1.0, 2.0}, 5.0, std::nullopt}, {7, {3.0, 4.0}, 6.0, std::nullopt}};
  const auto m = d.feature_matrix();
  EXPECT_EQ(m.rows(), 2);
  EXPECT_EQ(m.cols(), 2);
  EXPECT_EQ(m(1, 0), 2.0);
  EXPECT_EQ(d.targets(), (std::vector<double>{5.0, 6.0}));
  EXPECT_EQ(d.max_id(), 7);
  d.samples[1].id = 3;
  EXPECT_THROW(d.validate(), InputError);
}
