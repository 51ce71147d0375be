#include "fedunlearn/timing.hpp"

#include <numeric>

#include "fedunlearn/error.hpp"

namespace fedunlearn {

std::string_view to_string(OpClass c) {
  switch (c) {
    case OpClass::kTrain: return "train";
    case OpClass::kAggregate: return "aggregate";
    case OpClass::kCommit: return "commit";
    case OpClass::kSeal: return "seal";
    case OpClass::kVerify: return "lv";
    case OpClass::kRewrite: return "lr";
  }
  return "unknown";
}

void SimClock::charge(OpClass c, double ms, std::uint64_t ops) {
  if (!(ms >= 0.0)) fail(ErrorCode::kInvalidArgument, "negative simulated time");
  time_[index(c)] += ms;
  count_[index(c)] += ops;
}

double SimClock::total() const {
  return std::accumulate(time_.begin(), time_.end(), 0.0);
}

double SimClock::Snapshot::total() const {
  return std::accumulate(time.begin(), time.end(), 0.0);
}

SimClock::Snapshot SimClock::diff(const Snapshot& later, const Snapshot& earlier) {
  Snapshot out;
  for (std::size_t i = 0; i < kOpClassCount; ++i) {
    out.time[i] = later.time[i] - earlier.time[i];
    out.count[i] = later.count[i] - earlier.count[i];
  }
  return out;
}

}  // namespace fedunlearn
