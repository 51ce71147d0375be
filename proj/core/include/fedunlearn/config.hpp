#pragma once

// Experiment configuration. On disk this is one flat JSON object (no
// nesting) carrying a schema_version key; every field has a default, so
// a config file only lists what it overrides.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedunlearn/datasets.hpp"
#include "fedunlearn/fl.hpp"
#include "fedunlearn/ledger.hpp"
#include "fedunlearn/timing.hpp"

namespace fedunlearn {

enum class ScenarioKind { kHonest, kTamper, kKeyExposure, kNoUnlearnBaseline, kRetrainFromScratch };

std::string_view to_string(ScenarioKind kind);
/// "honest", "tamper", "key-exposure", "no-unlearn-baseline", "retrain-from-scratch".
ScenarioKind scenario_from_string(std::string_view name);

// What the dishonest server does in the tamper scenario.
enum class TamperMode { kIncludeTarget, kSwapPayload };

enum class DatasetKind { kBlobs, kCsv, kIdx };

inline constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;

  // Federation and training.
  std::size_t clients = 10;  // K
  unsigned rounds = 20;      // T
  unsigned local_epochs = 5; // E
  double learning_rate = 0.1;
  std::size_t batch_size = 10;
  std::size_t hidden = 0;  // 0 = softmax regression
  fl::Activation activation = fl::Activation::kTanh;

  // Unlearning.
  double calibration_ratio = 0.5;  // c
  double delta_t = 1.0;
  double alpha = 1.0;
  bool strict_calibration = true;
  // Recorded only. A possible reading is "commit every 2 local epochs
  // during calibration", but nothing in the protocol depends on it.
  unsigned time_interval = 2;
  unsigned max_rounds = 0;  // T in the adaptive-rounds formula; 0 = rounds
  std::vector<ledger::NodeId> targets{1};
  std::uint64_t unlearn_round = 0;  // t_u
  double rewrite_scale = 1.0;

  // Ledger and costs.
  ledger::ConsensusKind consensus = ledger::ConsensusKind::kDpos;
  unsigned pow_difficulty = 8;
  std::vector<ledger::NodeId> validators{101, 102, 103};
  CostModel costs;

  // Chameleon group size (bits of q).
  unsigned lambda = 128;

  std::uint64_t seed = 1;

  // Data.
  DatasetKind dataset = DatasetKind::kBlobs;
  fl::BlobSpec blobs;
  std::string csv_path;
  std::string idx_images;
  std::string idx_labels;
  std::size_t idx_limit = 0;

  // Scenario.
  ScenarioKind scenario = ScenarioKind::kHonest;
  TamperMode tamper_mode = TamperMode::kIncludeTarget;
  std::size_t tamper_step = 3;  // 0 is the initial calibration
  std::size_t key_exposure_attempts = 1000;
};

/// Throws kConfig naming the first offending field.
void validate(const ExperimentConfig& cfg);

/// Applies the keys of a flat JSON object on top of `base` and validates.
/// Unknown keys and wrongly typed values throw kConfig.
ExperimentConfig parse_config(std::string_view json_text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Flat JSON with every field, keys in a fixed order.
std::string to_json(const ExperimentConfig& cfg);

/// Desk profile (the defaults) and the larger full-scale profile (K=50, T=40, E=10, PoW).
ExperimentConfig desk_profile();
ExperimentConfig full_profile();

}  // namespace fedunlearn
