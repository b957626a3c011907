#include "spudrf/report.hpp"

#include "spudrf/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

namespace spudrf {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError("line " + std::to_string(line_no) + ": invalid number '" + std::string(s) + "'");
  return v;
}

std::size_t parse_count(std::string_view s, std::size_t line_no) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError("line " + std::to_string(line_no) + ": invalid count '" + std::string(s) + "'");
  return v;
}

nlohmann::json leaves_json(const std::vector<LeafParams>& leaves) {
  auto arr = nlohmann::json::array();
  for (const auto& l : leaves) arr.push_back({{"mu", l.mean}, {"var", l.variance}});
  return arr;
}

}  // namespace

std::string format_trace(std::span<const TraceRecord> records) {
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.pace) + ',' + fmt_double(r.lambda) + ',' + fmt_double(r.lambda_prime) +
           ',' + fmt_double(r.gamma) + ',' + std::to_string(r.n_selected) + ',' +
           std::to_string(r.n_soft) + ',' + std::to_string(r.n_zero) + ',' + fmt_double(r.train_mae) +
           ',' + fmt_double(r.test_mae) + ',' + fmt_double(r.test_cs) + ',' +
           fmt_double(r.mean_entropy) + ',' + fmt_double(r.score_shift) + '\n';
  }
  return out;
}

std::vector<TraceRecord> parse_trace(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw ParseError("line 1: unexpected trace header");
  std::vector<TraceRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const auto c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (f.size() != 12)
      throw ParseError("line " + std::to_string(line_no) + ": expected 12 fields, found " +
                       std::to_string(f.size()));
    TraceRecord r;
    r.pace = parse_count(f[0], line_no);
    r.lambda = parse_double(f[1], line_no);
    r.lambda_prime = parse_double(f[2], line_no);
    r.gamma = parse_double(f[3], line_no);
    r.n_selected = parse_count(f[4], line_no);
    r.n_soft = parse_count(f[5], line_no);
    r.n_zero = parse_count(f[6], line_no);
    r.train_mae = parse_double(f[7], line_no);
    r.test_mae = parse_double(f[8], line_no);
    r.test_cs = parse_double(f[9], line_no);
    r.mean_entropy = parse_double(f[10], line_no);
    r.score_shift = parse_double(f[11], line_no);
    out.push_back(r);
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit_trace(std::span<const TraceRecord> records, const std::filesystem::path& path) {
  write_text_file(path, format_trace(records));
}

std::vector<TraceRecord> read_trace(const std::filesystem::path& path) {
  try {
    return parse_trace(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

nlohmann::json summary_json(const TrainReport& report) {
  nlohmann::json j;
  j["config"] = report.effective_config;

  auto trace = nlohmann::json::array();
  for (const auto& r : report.trace) {
    trace.push_back({{"pace", r.pace},
                     {"lambda", r.lambda},
                     {"lambda_prime", r.lambda_prime},
                     {"gamma", r.gamma},
                     {"n_selected", r.n_selected},
                     {"n_soft", r.n_soft},
                     {"n_zero", r.n_zero},
                     {"train_mae", r.train_mae},
                     {"test_mae", r.test_mae},
                     {"test_cs", r.test_cs},
                     {"mean_entropy", r.mean_entropy},
                     {"score_shift", r.score_shift}});
  }
  j["trace"] = std::move(trace);

  auto paces = nlohmann::json::array();
  for (const auto& p : report.paces) {
    paces.push_back({{"pace", p.pace},
                     {"dataset_size", p.dataset_size},
                     {"duplicated", p.duplicated},
                     {"floored_samples", p.floored_samples},
                     {"gradient_steps", p.gradient_steps},
                     {"skipped_steps", p.skipped_steps},
                     {"batch_order_seed", p.batch_order_seed},
                     {"selected_ids", p.selected_ids}});
  }
  j["paces"] = std::move(paces);

  auto snapshots = nlohmann::json::array();
  for (const auto& s : report.leaf_snapshots) {
    auto trees = nlohmann::json::array();
    for (const auto& t : s.trees) trees.push_back(leaves_json(t));
    snapshots.push_back({{"pace", s.pace}, {"trees", std::move(trees)}});
  }
  j["leaf_snapshots"] = std::move(snapshots);

  const auto& f = report.final_metrics;
  j["final"] = {{"test_mae", f.test_mae},
                {"test_cs", f.test_cs},
                {"rare_region_mae", f.rare_region_mae},
                {"rare_region_count", f.rare_region_count},
                {"mean_entropy", f.mean_entropy}};
  return j;
}

void emit_summary(const TrainReport& report, const std::filesystem::path& path) {
  write_text_file(path, summary_json(report).dump(2) + "\n");
}

}  // namespace spudrf
