#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedunlearn/timing.hpp"

namespace fedunlearn {

/// One row per (phase, round). Times are cumulative simulated ms since the
/// start of the phase; time_total is the sum of the class columns.
struct MetricsRecord {
  std::string scenario;
  std::string phase;  // train | unlearn | reference | baseline
  std::int64_t round = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  double mia_precision = 0.0;
  double mia_recall = 0.0;
  double time_train = 0.0;
  double time_aggregate = 0.0;
  double time_commit = 0.0;
  double time_seal = 0.0;
  double time_lv = 0.0;
  double time_lr = 0.0;
  double time_total = 0.0;
  std::uint64_t count_lv = 0;
  std::uint64_t count_lr = 0;
  double deviation = 0.0;  // L2 distance to the reference model
  std::string verification;  // accept | reject:<reason> | n/a

  void set_times(const SimClock::Snapshot& s);
  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// Column names in output order.
const std::vector<std::string>& metrics_columns();

/// Header row plus one line per record. Shortest round-trip decimal
/// formatting, '.' separator regardless of locale.
std::string to_csv(std::span<const MetricsRecord> records);
std::vector<MetricsRecord> parse_csv(const std::string& text);

/// One JSON object per line.
std::string to_jsonl(std::span<const MetricsRecord> records);
std::vector<MetricsRecord> parse_jsonl(const std::string& text);

/// Writes <stem>.csv and <stem>.jsonl. Throws kIo.
void emit_metrics(std::span<const MetricsRecord> records, const std::filesystem::path& stem);

}  // namespace fedunlearn
