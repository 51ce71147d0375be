#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace fedunlearn {

// Operation classes for simulated interaction time. kVerify is LV (local
// update verification), kRewrite is LR (local update replacement).
enum class OpClass : std::size_t {
  kTrain = 0,
  kAggregate,
  kCommit,
  kSeal,
  kVerify,
  kRewrite,
};
inline constexpr std::size_t kOpClassCount = 6;

std::string_view to_string(OpClass c);

/// Deterministic costs in simulated milliseconds.
struct CostModel {
  double contract_latency_ms = 500.0;  // per contract call
  double dpos_seal_ms = 100.0;
  double pow_hash_ms = 0.4;            // per puzzle attempt
  double verify_ms = 5.0;              // one chameleon hash recomputation
  double rewrite_ms = 5.0;             // one trapdoor collision
  double train_ms_per_sample_epoch = 2.0;
  double aggregate_ms_per_update = 1.0;
};

/// Simulated clock; total() is always the sum of the per-class times.
class SimClock {
 public:
  void charge(OpClass c, double ms, std::uint64_t ops = 1);

  double time(OpClass c) const { return time_[index(c)]; }
  std::uint64_t count(OpClass c) const { return count_[index(c)]; }
  double total() const;

  struct Snapshot {
    std::array<double, kOpClassCount> time{};
    std::array<std::uint64_t, kOpClassCount> count{};
    double total() const;
  };
  Snapshot snapshot() const { return {time_, count_}; }
  static Snapshot diff(const Snapshot& later, const Snapshot& earlier);

 private:
  static constexpr std::size_t index(OpClass c) { return static_cast<std::size_t>(c); }

  std::array<double, kOpClassCount> time_{};
  std::array<std::uint64_t, kOpClassCount> count_{};
};

}  // namespace fedunlearn
