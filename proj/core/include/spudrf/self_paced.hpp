#pragma once

#include "spudrf/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace spudrf {

enum class WeightingScheme { kHard, kSoft };

WeightingScheme parse_weighting(std::string_view name);
std::string_view weighting_name(WeightingScheme w);

struct PaceConfig {
  std::size_t pace_count = 10;
  double initial_fraction = 0.5;
  double gamma_initial = 15.0;
  double gamma_decay = 0.5;
  double soft_fraction = 0.10;
  WeightingScheme weighting = WeightingScheme::kSoft;
  // Curriculum reconstruction: the curriculum_count highest-entropy samples
  // are appended curriculum_copies more times each pace. When
  // curriculum_entropy_threshold is set, every sample above it is used
  // instead (capped at curriculum_count when that is non-zero).
  std::size_t curriculum_count = 80;
  std::size_t curriculum_copies = 1;
  std::optional<double> curriculum_entropy_threshold;

  void validate() const;
};

/// score_i = log p_Fi + gamma * H_i.
std::vector<double> selection_scores(std::span<const double> log_likelihoods,
                                     std::span<const double> entropies, double gamma);

/// v_i = 1 iff score_i > -lambda.
std::vector<double> hard_weights(std::span<const double> scores, double lambda);

/// zeta = (1/lambda' - 1/lambda)^-1.
double soft_zeta(double lambda, double lambda_prime);

/// Mixture weighting: 1 above -lambda', 0 below -lambda, and
/// -zeta/score - zeta/lambda in between. Requires lambda > lambda' > 0.
double soft_weight(double score, double lambda, double lambda_prime);
std::vector<double> soft_weights(std::span<const double> scores, double lambda,
                                 double lambda_prime);

/// Indices sorted by descending score; equal scores keep ascending index.
std::vector<std::size_t> rank_scores(std::span<const double> scores);

/// ceil(fraction * n) with a 1e-9 relative guard against representation
/// error, clamped to [1, n].
std::size_t count_for_fraction(double fraction, std::size_t n);

/// Result of threshold calibration. `order` is rank_scores(scores); the
/// first `selected` entries of it are the selected samples. -lambda sits
/// half-way between the last selected and first rejected score. When those
/// two scores are equal, -lambda equals them and the tie goes to the lower
/// index.
struct LambdaCut {
  double lambda = 0.0;
  std::size_t selected = 0;
  std::vector<std::size_t> order;
};

LambdaCut calibrate_lambda(std::span<const double> scores, double target_fraction);
LambdaCut calibrate_lambda_count(std::span<const double> scores, std::size_t count);

struct LambdaPrimeCut {
  double lambda_prime = 0.0;
  std::size_t soft_count = 0;  // lowest-ranked selected samples in the band
};

/// Places -lambda' so that the bottom ceil(soft_fraction * m) selected
/// samples lie strictly inside (-lambda, -lambda').
LambdaPrimeCut calibrate_lambda_prime(std::span<const double> scores, const LambdaCut& cut,
                                      double soft_fraction);

struct SelectionState {
  std::size_t pace_index = 0;
  double target_fraction = 0.0;
  double lambda = 0.0;
  double lambda_prime = 0.0;  // equals lambda under hard weighting
  double gamma = 0.0;
  double zeta = 0.0;          // 0 under hard weighting
  double score_shift = 0.0;   // added to every score before thresholding
  WeightingScheme weighting = WeightingScheme::kSoft;
  std::vector<double> scores;  // shifted scores
  std::vector<double> weights;
  std::vector<std::uint8_t> selected;
  std::vector<std::uint8_t> soft_band;

  std::size_t n_selected() const;
  std::size_t n_soft() const;
  std::size_t n_zero() const;
};

/// Computes scores, picks exactly `count` samples by rank, calibrates the
/// thresholds and assigns weights. When a threshold would not be negative
/// (lambda or lambda' <= 0), every score is shifted so the upper threshold
/// lands at -1; the shift is kept in score_shift.
SelectionState select_samples(std::span<const double> log_likelihoods,
                              std::span<const double> entropies, double gamma, std::size_t count,
                              double soft_fraction, WeightingScheme weighting);

// Pace schedule, paces numbered from 1.

double pace_fraction(const PaceConfig& config, std::size_t pace);
/// m_1 = ceil(f0 N); pace p selects m_1 + ceil((p-1)(N - m_1)/(P-1)), so
/// each pace adds 1/(P-1) of the remainder and the final pace selects all N.
std::size_t pace_selected_count(const PaceConfig& config, std::size_t pace, std::size_t n);
/// gamma_0 * decay^(pace - 1), forced to 0 on the final pace.
double pace_gamma(const PaceConfig& config, std::size_t pace);

SelectionState start_pace(const PaceConfig& config, std::span<const double> log_likelihoods,
                          std::span<const double> entropies);

/// Moves to pace state.pace_index + 1 and recalibrates against fresh scores.
SelectionState advance_pace(const SelectionState& state, const PaceConfig& config,
                            std::span<const double> log_likelihoods,
                            std::span<const double> entropies);

struct Reconstruction {
  Dataset data;
  // For each appended sample, the index in the input it copies.
  std::vector<std::size_t> source_index;
};

/// Appends copies of the highest-entropy original samples (those without an
/// origin_id); ties go to the lower index. Copies get fresh ids above the
/// current maximum and origin_id set to the copied sample's id.
Reconstruction curriculum_reconstruction(const Dataset& data, std::span<const double> entropies,
                                         const PaceConfig& config);

}  // namespace spudrf
