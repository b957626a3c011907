#pragma once

#include "spudrf/dataset.hpp"
#include "spudrf/forest.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace spudrf {

inline constexpr double kDefaultCsLevel = 5.0;
inline constexpr double kDefaultBinWidth = 5.0;

double mae(std::span<const double> predictions, std::span<const double> targets);

/// Percentage of predictions with |error| <= level.
double cumulative_score(std::span<const double> predictions, std::span<const double> targets,
                        double level);

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input is constant.
double spearman_correlation(std::span<const double> a, std::span<const double> b);

struct EntropyBin {
  double center = 0.0;
  std::size_t count = 0;
  double mean_entropy = 0.0;
};

/// Bins of width bin_width anchored at 0 (bin b covers [b w, (b+1) w));
/// empty bins are omitted.
std::vector<EntropyBin> entropy_by_target_bin(std::span<const double> targets,
                                              std::span<const double> entropies,
                                              double bin_width);
std::vector<EntropyBin> entropy_by_target_bin(const ForestModel& model, const Dataset& data,
                                              double bin_width);

}  // namespace spudrf
