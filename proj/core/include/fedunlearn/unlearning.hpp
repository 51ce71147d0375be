#pragma once

// Unlearning engine: calibration aggregation, proof-of-unlearning
// verification, trapdoor rewriting of target updates, contribution
// tracking and the adaptive number of calibration rounds.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedunlearn/chameleon.hpp"
#include "fedunlearn/fl.hpp"
#include "fedunlearn/ledger.hpp"
#include "fedunlearn/offchain.hpp"
#include "fedunlearn/timing.hpp"

namespace fedunlearn::unlearning {

using ledger::NodeId;
using ledger::NodeSet;

// ---------------------------------------------------------------------------
// Calibration aggregation

/// sum(w_k U_k) / ((K - 1) * sum(w_k)) over retained clients. With
/// strict = false the (K - 1) factor is dropped (plain weighted mean).
/// Throws kEmptyInput, kDimensionMismatch, kInvalidArgument.
fl::ModelUpdate calibrate_aggregate(std::span<const fl::ModelUpdate> retained,
                                    std::span<const double> weights, std::size_t total_clients,
                                    bool strict = true);

/// M + U; the calibration counterpart of fl::apply_update.
fl::GlobalModel global_calibrate(const fl::GlobalModel& model, const fl::ModelUpdate& calibrated);

// ---------------------------------------------------------------------------
// Verification

enum class RejectReason { kNone, kHashMismatch, kMissingEntry };
std::string_view to_string(RejectReason r);

struct VerifyResult {
  bool accepted = false;
  RejectReason reason = RejectReason::kNone;
  std::string detail;
};

struct CalibrationCheck {
  chameleon::PublicKey server_pk;
  ledger::HashCommit committed;  // calibration hash + published randomizer
  std::map<NodeId, chameleon::HashValue> retained;
  std::map<NodeId, double> weights;
  std::size_t total_clients = 0;
  bool strict_calibration = true;
};

/// Recomputes the calibrated update from the retained clients' stored
/// payloads, hashes it under the server key with the published randomizer,
/// and compares against the commitment. Also refetches the stored
/// calibration payload and requires it to verify. Uses only public inputs.
VerifyResult verify_calibration(const CalibrationCheck& check, const offchain::OffchainStore& store);

// ---------------------------------------------------------------------------
// Rewriting

struct RewriteRecord {
  std::uint64_t round = 0;
  NodeId owner = 0;
  chameleon::HashValue key;
  bool success = false;
  std::string error;
};

struct RewriteReport {
  std::vector<RewriteRecord> entries;
  bool all_succeeded() const;
};

/// Rewrites every stored update owned by a target, across all rounds.
/// Targets without a trapdoor in `trapdoors`, or whose trapdoor fails,
/// show up as failed records; on-chain hashes are never touched.
RewriteReport unlearn_rewrite_all(const NodeSet& targets,
                                  const std::map<NodeId, chameleon::SecretKey>& trapdoors,
                                  offchain::OffchainStore& store, const ledger::Ledger& chain,
                                  std::uint64_t seed, double scale = 1.0);

// ---------------------------------------------------------------------------
// Contribution tracking

/// arccos of cosine similarity, clamped; pi/2 if either vector is zero.
/// Throws kDimensionMismatch.
double compute_theta(std::span<const double> local, std::span<const double> global);

class ContributionTracker {
 public:
  /// Running mean recurrence; t is 1-based and must be last_round(k) + 1.
  /// Returns the new running value. Throws kNonConsecutiveRound, kDomain.
  double update(NodeId client, double theta, std::uint64_t t);

  std::optional<double> theta_tilde(NodeId client) const;
  std::uint64_t last_round(NodeId client) const;
  const std::vector<double>& history(NodeId client) const;
  std::vector<NodeId> clients() const;

 private:
  struct Entry {
    double tilde = 0.0;
    std::uint64_t t = 0;
    std::vector<double> history;
  };
  std::map<NodeId, Entry> entries_;
};

/// alpha * (1 - exp(-alpha * exp(theta_tilde - 1))).
double gompertz_contribution(double theta_tilde, double alpha);

/// (1 - f_target / sum_retained f) * T, unrounded. nullopt when the
/// retained sum is zero (degenerate contributions).
std::optional<double> adaptive_rounds_exact(std::span<const double> target_f,
                                            std::span<const double> retained_f, unsigned total_rounds);

/// ceil of adaptive_rounds_exact clamped to [0, T]; T for degenerate input.
unsigned adaptive_rounds(const NodeSet& targets, const ContributionTracker& tracker,
                         std::span<const NodeId> retained, double alpha, unsigned total_rounds);

// ---------------------------------------------------------------------------
// Orchestration

struct RetrainPlan {
  unsigned t_tilde = 0;
  double alpha = 1.0;
  double delta_t = 1.0;
  double calibration_ratio = 0.5;
  unsigned calibrated_epochs = 1;  // ceil(c * E), at least 1
};

struct UnlearnRequest {
  NodeSet targets;
  std::uint64_t issued_round = 0;  // t_u: stored model/updates the calibration starts from
};

struct Participant {
  NodeId id = 0;
  chameleon::KeyPair keys;
  fl::ClientDataset data;
};

/// Hooks for adversarial scenarios. Step 0 is the initial calibration on
/// the stored round-t_u updates, steps 1..T~ are calibration rounds.
struct ServerBehavior {
  std::optional<std::size_t> include_target_at_step;
  std::optional<std::size_t> swap_payload_at_step;
};

struct UnlearningOptions {
  double alpha = 1.0;
  double delta_t = 1.0;
  double calibration_ratio = 0.5;
  unsigned max_rounds = 20;  // T
  bool strict_calibration = true;
  double rewrite_scale = 1.0;
  std::uint64_t seed = 1;
  // Overrides T~ (e.g. T for a full-retrain reference run).
  std::optional<unsigned> force_rounds;
};

struct StepReport {
  std::size_t step = 0;
  std::uint64_t ledger_round = 0;
  fl::GlobalModel model;
  VerifyResult verification;
};

struct UnlearningContext {
  ledger::Ledger& chain;
  offchain::OffchainStore& store;
  std::span<const Participant> clients;  // everyone, targets included
  const chameleon::KeyPair& server_keys;
  NodeId server_id = 0;
  const ContributionTracker& tracker;
  const fl::GlobalModel& base_model;    // stored M^{t_u}
  std::uint64_t first_free_round = 0;   // ledger round of calibration step 1
  fl::TrainConfig train;
  CostModel costs;
  SimClock* clock = nullptr;
  ServerBehavior behavior;
  std::function<void(const StepReport&)> on_step;
};

struct UnlearningOutcome {
  fl::GlobalModel model;
  RetrainPlan plan;
  RewriteReport rewrites;
  std::vector<StepReport> steps;
  std::optional<std::size_t> failed_step;
  VerifyResult failure;
  SimClock::Snapshot retrain_time;  // calibration work only, rewriting excluded

  bool completed() const { return !failed_step.has_value(); }
};

RetrainPlan make_plan(const UnlearnRequest& request, const ContributionTracker& tracker,
                      std::span<const NodeId> retained, const UnlearningOptions& opts,
                      unsigned local_epochs);

/// Runs the full unlearning workflow for a request already on chain:
/// initial calibration from the stored round-t_u state with its hash
/// commitment and target verification, rewriting of the targets' stored
/// updates, then T~ rounds of retained-client local calibration, global
/// calibration and target verification. A rejected verification stops the
/// run and is reported through failed_step.
UnlearningOutcome run_unlearning(const UnlearnRequest& request, UnlearningContext& ctx,
                                 const UnlearningOptions& opts);

}  // namespace fedunlearn::unlearning
