#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace spudrf {

struct Sample {
  std::int64_t id = 0;
  std::vector<double> features;
  double target = 0.0;
  // Set on curriculum duplicates: id of the sample they were copied from.
  std::optional<std::int64_t> origin_id;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::size_t feature_dim = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Finite values, consistent widths, unique ids. Throws InputError.
  void validate() const;

  Eigen::MatrixXd feature_matrix() const;  // feature_dim x N
  std::vector<double> targets() const;
  std::int64_t max_id() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Two-component imbalanced target distribution: a truncated normal majority
/// plus a uniform rare band, pushed through a fixed sinusoidal feature map.
struct SyntheticSpec {
  std::size_t n = 2000;
  std::size_t feature_dim = 8;
  double majority_mean = 30.0;
  double majority_sd = 8.0;
  double lower = 0.0;
  double upper = 80.0;
  double rare_low = 60.0;
  double rare_high = 80.0;
  double rare_mass = 0.05;
  double noise_sd = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kFeaturePeriod = 80.0;

/// Noise-free feature j of target y: sin(2 pi (j+1) y / 80 + (j+1) pi / 4).
double feature_map(double y, std::size_t j);

Dataset generate_synthetic(const SyntheticSpec& spec);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Seeded permutation split; floor(fraction * N) samples go to train. Both
/// halves keep the input order.
TrainTestSplit split_train_test(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Header `id,y,x0,...,x{D-1}`; values written with 17 significant digits.
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

}  // namespace spudrf
