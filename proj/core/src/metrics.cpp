#include "spudrf/metrics.hpp"

#include "spudrf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace spudrf {
namespace {

void check_pairs(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw UsageError("metric called on empty input");
  if (predictions.size() != targets.size())
    throw UsageError("predictions and targets differ in length");
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double mae(std::span<const double> predictions, std::span<const double> targets) {
  check_pairs(predictions, targets);
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += std::abs(predictions[i] - targets[i]);
  return total / static_cast<double>(predictions.size());
}

double cumulative_score(std::span<const double> predictions, std::span<const double> targets,
                        double level) {
  check_pairs(predictions, targets);
  if (!(level >= 0.0)) throw UsageError("error level L must be non-negative");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (std::abs(predictions[i] - targets[i]) <= level) ++inside;
  return 100.0 * static_cast<double>(inside) / static_cast<double>(predictions.size());
}

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("spearman inputs differ in length");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

std::vector<EntropyBin> entropy_by_target_bin(std::span<const double> targets,
                                              std::span<const double> entropies,
                                              double bin_width) {
  if (!(bin_width > 0.0)) throw UsageError("bin_width must be positive");
  if (targets.size() != entropies.size()) throw UsageError("targets and entropies differ in length");
  std::map<long long, std::pair<std::size_t, double>> bins;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto b = static_cast<long long>(std::floor(targets[i] / bin_width));
    auto& slot = bins[b];
    ++slot.first;
    slot.second += entropies[i];
  }
  std::vector<EntropyBin> out;
  out.reserve(bins.size());
  for (const auto& [b, slot] : bins)
    out.push_back({(static_cast<double>(b) + 0.5) * bin_width, slot.first,
                   slot.second / static_cast<double>(slot.first)});
  return out;
}

std::vector<EntropyBin> entropy_by_target_bin(const ForestModel& model, const Dataset& data,
                                              double bin_width) {
  if (!(bin_width > 0.0)) throw UsageError("bin_width must be positive");
  const auto fwd = forward_batch(data.feature_matrix(), model.backbone);
  std::vector<double> entropies(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd f = fwd.features.col(static_cast<Eigen::Index>(i));
    entropies[i] = forest_entropy_from_features({f.data(), static_cast<std::size_t>(f.size())}, model);
  }
  const auto y = data.targets();
  return entropy_by_target_bin(y, entropies, bin_width);
}

}  // namespace spudrf
