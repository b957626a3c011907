#include "spudrf/self_paced.hpp"

#include "spudrf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace spudrf {
namespace {

// A value strictly between lower < upper, or `lower` itself when the two are
// adjacent doubles. Equal inputs return upper.
double cut_below(double upper, double lower) {
  if (!(lower < upper)) return upper;
  const double mid = upper + (lower - upper) / 2.0;
  return (mid < upper && mid > lower) ? mid : lower;
}

double cut_above(double lower, double upper) {
  if (!(lower < upper)) return std::nextafter(lower, std::numeric_limits<double>::infinity());
  const double mid = lower + (upper - lower) / 2.0;
  return (mid > lower && mid < upper) ? mid : upper;
}

void check_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw UsageError("score inputs differ in length: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
}

}  // namespace

WeightingScheme parse_weighting(std::string_view name) {
  if (name == "soft") return WeightingScheme::kSoft;
  if (name == "hard") return WeightingScheme::kHard;
  throw ConfigError("unknown weighting scheme '" + std::string(name) + "'");
}

std::string_view weighting_name(WeightingScheme w) {
  return w == WeightingScheme::kSoft ? "soft" : "hard";
}

void PaceConfig::validate() const {
  if (pace_count < 1) throw ConfigError("pace.pace_count must be at least 1");
  if (!(initial_fraction > 0.0 && initial_fraction <= 1.0))
    throw ConfigError("pace.initial_fraction must lie in (0, 1]");
  if (!(gamma_initial >= 0.0) || !std::isfinite(gamma_initial))
    throw ConfigError("pace.gamma_initial must be finite and non-negative");
  if (!(gamma_decay >= 0.0 && gamma_decay <= 1.0))
    throw ConfigError("pace.gamma_decay must lie in [0, 1]");
  if (!(soft_fraction > 0.0 && soft_fraction < 1.0))
    throw ConfigError("pace.soft_fraction must lie in (0, 1)");
  if (curriculum_copies < 1) throw ConfigError("pace.curriculum_copies must be at least 1");
}

std::vector<double> selection_scores(std::span<const double> log_likelihoods,
                                     std::span<const double> entropies, double gamma) {
  check_same_length(log_likelihoods, entropies);
  if (!(gamma >= 0.0)) throw UsageError("gamma must be non-negative");
  std::vector<double> scores(log_likelihoods.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = log_likelihoods[i] + gamma * entropies[i];
  return scores;
}

std::vector<double> hard_weights(std::span<const double> scores, double lambda) {
  std::vector<double> v(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) v[i] = scores[i] > -lambda ? 1.0 : 0.0;
  return v;
}

double soft_zeta(double lambda, double lambda_prime) {
  return 1.0 / (1.0 / lambda_prime - 1.0 / lambda);
}

double soft_weight(double score, double lambda, double lambda_prime) {
  if (!(lambda > lambda_prime && lambda_prime > 0.0))
    throw UsageError("soft weighting requires lambda > lambda' > 0");
  if (score >= -lambda_prime) return 1.0;
  if (score <= -lambda) return 0.0;
  const double zeta = soft_zeta(lambda, lambda_prime);
  return std::clamp(-zeta / score - zeta / lambda, 0.0, 1.0);
}

std::vector<double> soft_weights(std::span<const double> scores, double lambda,
                                 double lambda_prime) {
  std::vector<double> v(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) v[i] = soft_weight(scores[i], lambda, lambda_prime);
  return v;
}

std::vector<std::size_t> rank_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::size_t count_for_fraction(double fraction, std::size_t n) {
  if (n == 0) return 0;
  const double x = fraction * static_cast<double>(n);
  const double nearest = std::round(x);
  const double m = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
  return std::clamp(static_cast<std::size_t>(std::max(m, 0.0)), std::size_t{1}, n);
}

LambdaCut calibrate_lambda_count(std::span<const double> scores, std::size_t count) {
  if (scores.empty()) throw UsageError("cannot calibrate lambda on an empty score vector");
  if (count < 1 || count > scores.size())
    throw SchedulingError("selection count " + std::to_string(count) + " outside [1, " +
                          std::to_string(scores.size()) + "]");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("non-finite selection score");
  LambdaCut cut;
  cut.order = rank_scores(scores);
  cut.selected = count;
  const double last = scores[cut.order[count - 1]];
  const double threshold = count < scores.size() ? cut_below(last, scores[cut.order[count]]) : last - 1.0;
  cut.lambda = -threshold;
  return cut;
}

LambdaCut calibrate_lambda(std::span<const double> scores, double target_fraction) {
  if (!(target_fraction > 0.0 && target_fraction <= 1.0))
    throw UsageError("target fraction must lie in (0, 1]");
  if (scores.empty()) throw UsageError("cannot calibrate lambda on an empty score vector");
  return calibrate_lambda_count(scores, count_for_fraction(target_fraction, scores.size()));
}

LambdaPrimeCut calibrate_lambda_prime(std::span<const double> scores, const LambdaCut& cut,
                                      double soft_fraction) {
  if (cut.selected == 0) throw SchedulingError("no selected samples to place a soft band in");
  if (!(soft_fraction > 0.0 && soft_fraction < 1.0))
    throw UsageError("soft fraction must lie in (0, 1)");
  const auto m = cut.selected;
  LambdaPrimeCut out;
  out.soft_count = count_for_fraction(soft_fraction, m);
  const auto top_of_band = m - out.soft_count;
  const double band_max = scores[cut.order[top_of_band]];
  const double upper = top_of_band > 0 ? cut_above(band_max, scores[cut.order[top_of_band - 1]])
                                       : band_max + 1.0;
  out.lambda_prime = -upper;
  return out;
}

std::size_t SelectionState::n_selected() const {
  return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), 1));
}

std::size_t SelectionState::n_soft() const {
  return static_cast<std::size_t>(std::count(soft_band.begin(), soft_band.end(), 1));
}

std::size_t SelectionState::n_zero() const {
  return static_cast<std::size_t>(std::count(weights.begin(), weights.end(), 0.0));
}

SelectionState select_samples(std::span<const double> log_likelihoods,
                              std::span<const double> entropies, double gamma, std::size_t count,
                              double soft_fraction, WeightingScheme weighting) {
  SelectionState st;
  st.gamma = gamma;
  st.weighting = weighting;
  st.scores = selection_scores(log_likelihoods, entropies, gamma);
  const auto n = st.scores.size();

  auto calibrate = [&](LambdaCut& cut, LambdaPrimeCut& prime) {
    cut = calibrate_lambda_count(st.scores, count);
    if (weighting == WeightingScheme::kSoft) {
      prime = calibrate_lambda_prime(st.scores, cut, soft_fraction);
    } else {
      prime = {cut.lambda, 0};
    }
  };

  LambdaCut cut;
  LambdaPrimeCut prime;
  calibrate(cut, prime);
  if (!(prime.lambda_prime > 0.0)) {
    // Thresholds must be negative scores; move the upper one to -1.
    st.score_shift = -(-prime.lambda_prime) - 1.0;
    for (auto& s : st.scores) s += st.score_shift;
    calibrate(cut, prime);
  }
  st.lambda = cut.lambda;
  st.lambda_prime = prime.lambda_prime;
  st.zeta = weighting == WeightingScheme::kSoft ? soft_zeta(st.lambda, st.lambda_prime) : 0.0;

  st.selected.assign(n, 0);
  st.soft_band.assign(n, 0);
  st.weights.assign(n, 0.0);
  for (std::size_t r = 0; r < cut.selected; ++r) {
    const auto i = cut.order[r];
    st.selected[i] = 1;
    const bool in_band = r >= cut.selected - prime.soft_count;
    if (weighting == WeightingScheme::kSoft && in_band) {
      st.soft_band[i] = 1;
      st.weights[i] = soft_weight(st.scores[i], st.lambda, st.lambda_prime);
    } else {
      st.weights[i] = 1.0;
    }
  }
  return st;
}

double pace_fraction(const PaceConfig& config, std::size_t pace) {
  if (pace < 1 || pace > config.pace_count) throw UsageError("pace index out of range");
  if (config.pace_count == 1) return 1.0;
  return config.initial_fraction + (1.0 - config.initial_fraction) * static_cast<double>(pace - 1) /
                                       static_cast<double>(config.pace_count - 1);
}

std::size_t pace_selected_count(const PaceConfig& config, std::size_t pace, std::size_t n) {
  if (pace < 1 || pace > config.pace_count) throw UsageError("pace index out of range");
  if (config.pace_count == 1 || n == 0) return n;
  const auto first = count_for_fraction(config.initial_fraction, n);
  const auto rest = n - first;
  const auto shares = config.pace_count - 1;
  return first + ((pace - 1) * rest + shares - 1) / shares;
}

double pace_gamma(const PaceConfig& config, std::size_t pace) {
  if (pace < 1 || pace > config.pace_count) throw UsageError("pace index out of range");
  if (pace == config.pace_count) return 0.0;
  return config.gamma_initial * std::pow(config.gamma_decay, static_cast<double>(pace - 1));
}

namespace {

SelectionState select_for_pace(const PaceConfig& config, std::size_t pace,
                               std::span<const double> log_likelihoods,
                               std::span<const double> entropies) {
  check_same_length(log_likelihoods, entropies);
  if (log_likelihoods.empty()) throw SchedulingError("cannot select from an empty training set");
  auto st = select_samples(log_likelihoods, entropies, pace_gamma(config, pace),
                           pace_selected_count(config, pace, log_likelihoods.size()),
                           config.soft_fraction, config.weighting);
  st.pace_index = pace;
  st.target_fraction = pace_fraction(config, pace);
  return st;
}

}  // namespace

SelectionState start_pace(const PaceConfig& config, std::span<const double> log_likelihoods,
                          std::span<const double> entropies) {
  config.validate();
  return select_for_pace(config, 1, log_likelihoods, entropies);
}

SelectionState advance_pace(const SelectionState& state, const PaceConfig& config,
                            std::span<const double> log_likelihoods,
                            std::span<const double> entropies) {
  config.validate();
  if (state.pace_index >= config.pace_count)
    throw UsageError("advance_pace called past the final pace (" + std::to_string(config.pace_count) + ")");
  return select_for_pace(config, state.pace_index + 1, log_likelihoods, entropies);
}

Reconstruction curriculum_reconstruction(const Dataset& data, std::span<const double> entropies,
                                         const PaceConfig& config) {
  if (entropies.size() != data.size()) throw UsageError("entropy vector does not match dataset");
  if (config.curriculum_count > data.size())
    throw UsageError("curriculum_count " + std::to_string(config.curriculum_count) +
                     " exceeds dataset size " + std::to_string(data.size()));
  Reconstruction out{data, {}};

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.samples[i].origin_id) continue;
    if (config.curriculum_entropy_threshold && !(entropies[i] > *config.curriculum_entropy_threshold))
      continue;
    candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return entropies[a] > entropies[b]; });
  std::size_t take = candidates.size();
  if (!config.curriculum_entropy_threshold || config.curriculum_count > 0)
    take = std::min(take, config.curriculum_count);
  candidates.resize(take);
  std::sort(candidates.begin(), candidates.end());

  auto next_id = data.max_id() + 1;
  for (auto i : candidates) {
    for (std::size_t c = 0; c < config.curriculum_copies; ++c) {
      Sample copy = data.samples[i];
      copy.id = next_id++;
      copy.origin_id = data.samples[i].id;
      out.data.samples.push_back(std::move(copy));
      out.source_index.push_back(i);
    }
  }
  return out;
}

}  // namespace spudrf
