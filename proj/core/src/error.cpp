#include "fedunlearn/error.hpp"

namespace fedunlearn {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kGenerationTimeout: return "generation-timeout";
    case ErrorCode::kDomain: return "domain-error";
    case ErrorCode::kNonFinite: return "non-finite-value";
    case ErrorCode::kTrapdoorMismatch: return "trapdoor-mismatch";
    case ErrorCode::kDuplicateNonce: return "duplicate-nonce";
    case ErrorCode::kOverwriteAttempt: return "overwrite-attempt";
    case ErrorCode::kUnknownClient: return "unknown-client";
    case ErrorCode::kPowTimeout: return "pow-timeout";
    case ErrorCode::kUnknownRound: return "unknown-round";
    case ErrorCode::kUnknownKey: return "unknown-key";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kNonConsecutiveRound: return "non-consecutive-round";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDegenerateThreshold: return "degenerate-threshold";
    case ErrorCode::kParse: return "parse-error";
    case ErrorCode::kIo: return "io-error";
    case ErrorCode::kConfig: return "config-error";
  }
  return "unknown";
}

}  // namespace fedunlearn
