#pragma once

// Experiment driver: wires the chain, the store, the FL engine and the
// unlearning engine into the training and unlearning workflows, runs the
// named scenarios and writes a self-contained run directory.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedunlearn/chameleon.hpp"
#include "fedunlearn/config.hpp"
#include "fedunlearn/datasets.hpp"
#include "fedunlearn/fl.hpp"
#include "fedunlearn/ledger.hpp"
#include "fedunlearn/metrics.hpp"
#include "fedunlearn/offchain.hpp"
#include "fedunlearn/timing.hpp"
#include "fedunlearn/unlearning.hpp"

namespace fedunlearn::harness {

using ledger::NodeId;
using ledger::NodeSet;

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailure = 2;
inline constexpr int kExitConfigError = 3;
inline constexpr int kExitInternalError = 4;

/// Aggregator role on the chain. Consensus only picks who seals blocks, so
/// the contract state does not depend on which validator served a round.
inline constexpr NodeId kServerId = 0;

struct MiaResult {
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
  std::size_t predicted_members = 0;
};

/// Loss-threshold attack: "member" iff loss < tau, tau = mean loss on
/// `calibration`. Precision is 0 when nothing is predicted a member.
/// Throws kDegenerateThreshold (empty calibration) or kEmptyInput.
MiaResult mia_probe(const fl::GlobalModel& model, const fl::Dataset& members,
                    const fl::Dataset& non_members, const fl::Dataset& calibration);

fl::FederatedData load_data(const ExperimentConfig& cfg);
fl::ModelShape model_shape(const ExperimentConfig& cfg, const fl::FederatedData& data);
fl::TrainConfig train_config(const ExperimentConfig& cfg);

/// Concatenated training data of the target clients.
fl::Dataset target_members(const ExperimentConfig& cfg, const fl::FederatedData& data);

struct TrainedState {
  ExperimentConfig cfg;
  std::unique_ptr<SimClock> clock = std::make_unique<SimClock>();  // the chain points at it
  chameleon::ChameleonParams params;
  chameleon::KeyPair server_keys;
  std::vector<unlearning::Participant> participants;
  fl::FederatedData data;
  fl::Dataset members;  // targets' training data
  fl::ModelShape shape;
  fl::TrainConfig train;
  std::optional<ledger::Ledger> chain;
  offchain::OffchainStore store;
  unlearning::ContributionTracker tracker;
  std::vector<fl::GlobalModel> history;  // M^0 .. M^T
  std::vector<MetricsRecord> records;

  const fl::GlobalModel& final_model() const { return history.back(); }
};

/// Plain FedAvg over the non-target clients, no chain. The deviation
/// reference; `per_round` receives M^1 .. M^T.
fl::GlobalModel train_reference(const ExperimentConfig& cfg, const fl::FederatedData& data,
                                std::vector<fl::GlobalModel>* per_round = nullptr);

/// T rounds of local training, store + commit, aggregation and global
/// commit. Records carry deviation to `reference` when given.
TrainedState run_training(const ExperimentConfig& cfg, const fl::GlobalModel* reference = nullptr);

struct TimeReport {
  unsigned rounds = 0;   // T
  unsigned t_tilde = 0;
  double adaptive_ms = 0.0;
  double full_ms = 0.0;  // T rounds of calibration at c = 1
  double measured_reduction_rounds = 0.0;
  double estimate_rounds = 0.0;  // (delta_t / c) (T - T~)
};

struct KeyExposureReport {
  std::size_t attempts = 0;
  std::size_t accepted = 0;          // forged randomizers that verified
  std::size_t store_rewrites = 0;    // rewrite_entry calls that went through
  bool chain_ok = false;
  bool store_intact = false;
};

struct ScenarioOutcome {
  ScenarioKind kind = ScenarioKind::kHonest;
  int exit_code = kExitOk;
  std::vector<MetricsRecord> records;
  std::optional<unlearning::UnlearningOutcome> unlearning;
  fl::GlobalModel final_model;
  MiaResult mia_before;
  MiaResult mia_after;
  fl::EvalResult final_eval;
  fl::EvalResult reference_eval;
  double deviation = 0.0;
  std::optional<TimeReport> time;
  std::optional<KeyExposureReport> exposure;
  std::optional<std::uint64_t> first_invalid_height;

  std::string summary_json() const;
};

/// Runs the configured scenario on a trained state. Expected adversarial
/// outcomes are reported through exit_code, not thrown.
ScenarioOutcome run_unlearning_scenario(TrainedState& state, const fl::GlobalModel& reference);

/// Submits and seals the unlearning request for cfg.targets.
unlearning::UnlearnRequest submit_request(TrainedState& state);

/// Simulated time of a full retrain (T calibration rounds at c = 1), run
/// on copies of the chain and store. Call before the real unlearning run.
double full_retrain_time(const TrainedState& state, const unlearning::UnlearnRequest& request);

TimeReport make_time_report(const ExperimentConfig& cfg, unsigned t_tilde, double adaptive_ms,
                            double full_ms);

struct ScenarioRun {
  TrainedState state;
  fl::GlobalModel reference;
  ScenarioOutcome outcome;
};

/// reference -> training -> scenario.
ScenarioRun run_scenario(const ExperimentConfig& cfg);

// Run directory layout:
//   config.json  ledger.jsonl  keys.json  secrets.json  tracker.json
//   store/  model.bin  metrics.csv  metrics.jsonl  outcome.json
void write_training(const std::filesystem::path& dir, const TrainedState& state);
void write_outcome(const std::filesystem::path& dir, const TrainedState& state,
                   const ScenarioOutcome& outcome);
/// Rebuilds a trained state from write_training output. Throws kParse or
/// kIo, and kInvalidArgument if the stored chain fails verification.
TrainedState load_training(const std::filesystem::path& dir);

struct PublicVerification {
  std::uint64_t round = 0;
  unlearning::VerifyResult result;
};

/// Re-checks every calibration commit on the chain using only public data
/// from the run directory (or only `round` when given).
std::vector<PublicVerification> verify_run(const std::filesystem::path& dir,
                                           std::optional<std::uint64_t> round = std::nullopt);

}  // namespace fedunlearn::harness
