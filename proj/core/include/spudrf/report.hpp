#pragma once

#include "spudrf/forest.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace spudrf {

/// One row of the per-pace trace.
struct TraceRecord {
  std::size_t pace = 0;
  double lambda = 0.0;
  double lambda_prime = 0.0;
  double gamma = 0.0;
  std::size_t n_selected = 0;
  std::size_t n_soft = 0;
  std::size_t n_zero = 0;
  double train_mae = 0.0;
  double test_mae = 0.0;
  double test_cs = 0.0;
  double mean_entropy = 0.0;
  double score_shift = 0.0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

inline constexpr const char* kTraceHeader =
    "pace,lambda,lambda_prime,gamma,n_selected,n_soft,n_zero,train_mae,test_mae,test_cs,"
    "mean_entropy,score_shift";

struct LeafSnapshot {
  std::size_t pace = 0;
  std::vector<std::vector<LeafParams>> trees;
};

struct PaceDetail {
  std::size_t pace = 0;
  std::size_t dataset_size = 0;  // training rows after curriculum reconstruction
  std::size_t duplicated = 0;
  std::size_t floored_samples = 0;
  std::size_t gradient_steps = 0;
  std::size_t skipped_steps = 0;
  std::uint64_t batch_order_seed = 0;  // epoch e permutes with derive_seed(seed, e)
  std::vector<std::int64_t> selected_ids;
};

struct FinalMetrics {
  double test_mae = 0.0;
  double test_cs = 0.0;
  double rare_region_mae = 0.0;
  std::size_t rare_region_count = 0;
  double mean_entropy = 0.0;
};

struct TrainReport {
  std::vector<TraceRecord> trace;
  std::vector<LeafSnapshot> leaf_snapshots;
  std::vector<PaceDetail> paces;
  FinalMetrics final_metrics;
  nlohmann::json effective_config = nlohmann::json::object();
};

std::string format_trace(std::span<const TraceRecord> records);
std::vector<TraceRecord> parse_trace(const std::string& text);

void emit_trace(std::span<const TraceRecord> records, const std::filesystem::path& path);
std::vector<TraceRecord> read_trace(const std::filesystem::path& path);

nlohmann::json summary_json(const TrainReport& report);
void emit_summary(const TrainReport& report, const std::filesystem::path& path);

/// Writes `text` to `path`, surfacing failures as IoError naming the path.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace spudrf
