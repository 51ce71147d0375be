#include "fedunlearn/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedunlearn/error.hpp"

namespace fedunlearn {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct Field {
  const char* key;
  std::function<void(const json&, ExperimentConfig&)> read;
  std::function<void(ordered_json&, const ExperimentConfig&)> write;
};

template <typename T>
T as(const json& v, const char* key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("expected boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::invalid_argument("expected integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw std::invalid_argument("expected non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::invalid_argument("expected number");
    } else {
      if (!v.is_string()) throw std::invalid_argument("expected string");
    }
    return v.get<T>();
  } catch (const std::exception& e) {
    fail(ErrorCode::kConfig, std::string(key) + ": " + e.what());
  }
}

template <typename T, typename Obj>
Field plain(const char* key, T Obj::*member, Obj ExperimentConfig::*group = nullptr) {
  // `group` selects a nested struct; nullptr means the config itself.
  if constexpr (std::is_same_v<Obj, ExperimentConfig>) {
    return {key, [=](const json& v, ExperimentConfig& c) { c.*member = as<T>(v, key); },
            [=](ordered_json& j, const ExperimentConfig& c) { j[key] = c.*member; }};
  } else {
    return {key, [=](const json& v, ExperimentConfig& c) { (c.*group).*member = as<T>(v, key); },
            [=](ordered_json& j, const ExperimentConfig& c) { j[key] = (c.*group).*member; }};
  }
}

std::vector<ledger::NodeId> id_list(const json& v, const char* key) {
  if (!v.is_array()) fail(ErrorCode::kConfig, std::string(key) + ": expected array of client ids");
  std::vector<ledger::NodeId> out;
  for (const auto& e : v) out.push_back(as<ledger::NodeId>(e, key));
  return out;
}

std::string_view dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::kBlobs: return "blobs";
    case DatasetKind::kCsv: return "csv";
    case DatasetKind::kIdx: return "idx";
  }
  return "blobs";
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      plain("schema_version", &C::schema_version),
      plain("clients", &C::clients),
      plain("rounds", &C::rounds),
      plain("local_epochs", &C::local_epochs),
      plain("learning_rate", &C::learning_rate),
      plain("batch_size", &C::batch_size),
      plain("hidden", &C::hidden),
      {"activation",
       [](const json& v, C& c) {
         const auto s = as<std::string>(v, "activation");
         if (s == "tanh") c.activation = fl::Activation::kTanh;
         else if (s == "relu") c.activation = fl::Activation::kRelu;
         else fail(ErrorCode::kConfig, "activation: expected tanh or relu");
       },
       [](ordered_json& j, const C& c) {
         j["activation"] = c.activation == fl::Activation::kTanh ? "tanh" : "relu";
       }},
      plain("calibration_ratio", &C::calibration_ratio),
      plain("delta_t", &C::delta_t),
      plain("alpha", &C::alpha),
      plain("strict_calibration", &C::strict_calibration),
      plain("time_interval", &C::time_interval),
      plain("max_rounds", &C::max_rounds),
      {"targets", [](const json& v, C& c) { c.targets = id_list(v, "targets"); },
       [](ordered_json& j, const C& c) { j["targets"] = c.targets; }},
      plain("unlearn_round", &C::unlearn_round),
      plain("rewrite_scale", &C::rewrite_scale),
      {"consensus",
       [](const json& v, C& c) {
         try {
           c.consensus = ledger::consensus_from_string(as<std::string>(v, "consensus"));
         } catch (const Error&) {
           fail(ErrorCode::kConfig, "consensus: expected dpos or pow");
         }
       },
       [](ordered_json& j, const C& c) { j["consensus"] = std::string(ledger::to_string(c.consensus)); }},
      plain("pow_difficulty", &C::pow_difficulty),
      {"validators", [](const json& v, C& c) { c.validators = id_list(v, "validators"); },
       [](ordered_json& j, const C& c) { j["validators"] = c.validators; }},
      plain("contract_latency_ms", &CostModel::contract_latency_ms, &C::costs),
      plain("dpos_seal_ms", &CostModel::dpos_seal_ms, &C::costs),
      plain("pow_hash_ms", &CostModel::pow_hash_ms, &C::costs),
      plain("verify_ms", &CostModel::verify_ms, &C::costs),
      plain("rewrite_ms", &CostModel::rewrite_ms, &C::costs),
      plain("train_ms_per_sample_epoch", &CostModel::train_ms_per_sample_epoch, &C::costs),
      plain("aggregate_ms_per_update", &CostModel::aggregate_ms_per_update, &C::costs),
      plain("lambda", &C::lambda),
      plain("seed", &C::seed),
      {"dataset",
       [](const json& v, C& c) {
         const auto s = as<std::string>(v, "dataset");
         if (s == "blobs") c.dataset = DatasetKind::kBlobs;
         else if (s == "csv") c.dataset = DatasetKind::kCsv;
         else if (s == "idx") c.dataset = DatasetKind::kIdx;
         else fail(ErrorCode::kConfig, "dataset: expected blobs, csv or idx");
       },
       [](ordered_json& j, const C& c) { j["dataset"] = std::string(dataset_name(c.dataset)); }},
      plain("blob_features", &fl::BlobSpec::features, &C::blobs),
      plain("blob_classes", &fl::BlobSpec::classes, &C::blobs),
      plain("blob_private_dims", &fl::BlobSpec::private_dims, &C::blobs),
      plain("blob_samples_per_client", &fl::BlobSpec::samples_per_client, &C::blobs),
      plain("blob_holdout_samples", &fl::BlobSpec::holdout_samples, &C::blobs),
      plain("blob_center_scale", &fl::BlobSpec::center_scale, &C::blobs),
      plain("blob_client_shift", &fl::BlobSpec::client_shift, &C::blobs),
      plain("blob_noise", &fl::BlobSpec::noise, &C::blobs),
      plain("blob_target_offset", &fl::BlobSpec::target_offset, &C::blobs),
      plain("csv_path", &C::csv_path),
      plain("idx_images", &C::idx_images),
      plain("idx_labels", &C::idx_labels),
      plain("idx_limit", &C::idx_limit),
      {"scenario",
       [](const json& v, C& c) { c.scenario = scenario_from_string(as<std::string>(v, "scenario")); },
       [](ordered_json& j, const C& c) { j["scenario"] = std::string(to_string(c.scenario)); }},
      {"tamper_mode",
       [](const json& v, C& c) {
         const auto s = as<std::string>(v, "tamper_mode");
         if (s == "include-target") c.tamper_mode = TamperMode::kIncludeTarget;
         else if (s == "swap-payload") c.tamper_mode = TamperMode::kSwapPayload;
         else fail(ErrorCode::kConfig, "tamper_mode: expected include-target or swap-payload");
       },
       [](ordered_json& j, const C& c) {
         j["tamper_mode"] = c.tamper_mode == TamperMode::kIncludeTarget ? "include-target" : "swap-payload";
       }},
      plain("tamper_step", &C::tamper_step),
      plain("key_exposure_attempts", &C::key_exposure_attempts),
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kConfig, what);
}

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kHonest: return "honest";
    case ScenarioKind::kTamper: return "tamper";
    case ScenarioKind::kKeyExposure: return "key-exposure";
    case ScenarioKind::kNoUnlearnBaseline: return "no-unlearn-baseline";
    case ScenarioKind::kRetrainFromScratch: return "retrain-from-scratch";
  }
  return "honest";
}

ScenarioKind scenario_from_string(std::string_view name) {
  for (auto k : {ScenarioKind::kHonest, ScenarioKind::kTamper, ScenarioKind::kKeyExposure,
                 ScenarioKind::kNoUnlearnBaseline, ScenarioKind::kRetrainFromScratch}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorCode::kConfig, "unknown scenario '" + std::string(name) + "'");
}

void validate(const ExperimentConfig& c) {
  require(c.schema_version == kConfigSchemaVersion,
          "schema_version: expected " + std::to_string(kConfigSchemaVersion));
  require(c.clients >= 2, "clients: need at least 2");
  require(c.rounds >= 1, "rounds: need at least 1");
  require(c.local_epochs >= 1, "local_epochs: need at least 1");
  require(finite_positive(c.learning_rate), "learning_rate: must be positive");
  require(c.batch_size >= 1, "batch_size: need at least 1");
  require(c.calibration_ratio > 0.0 && c.calibration_ratio <= 1.0, "calibration_ratio: must be in (0, 1]");
  require(c.delta_t > 0.0 && c.delta_t <= 1.0, "delta_t: must be in (0, 1]");
  require(finite_positive(c.alpha), "alpha: must be positive");
  require(finite_positive(c.rewrite_scale), "rewrite_scale: must be positive");
  require(!c.targets.empty(), "targets: need at least one target client");
  for (auto t : c.targets) {
    require(t >= 1 && t <= c.clients, "targets: ids run from 1 to clients");
  }
  require(c.targets.size() < c.clients, "targets: at least one client must be retained");
  require(c.unlearn_round < c.rounds, "unlearn_round: must be below rounds");
  require(!c.validators.empty(), "validators: need at least one");
  require(c.pow_difficulty <= 32, "pow_difficulty: at most 32 bits");
  require(c.lambda >= 16 && c.lambda <= 512, "lambda: must be in [16, 512]");
  for (double v : {c.costs.contract_latency_ms, c.costs.dpos_seal_ms, c.costs.pow_hash_ms,
                   c.costs.verify_ms, c.costs.rewrite_ms, c.costs.train_ms_per_sample_epoch,
                   c.costs.aggregate_ms_per_update}) {
    require(std::isfinite(v) && v >= 0.0, "cost fields must be finite and non-negative");
  }
  if (c.dataset == DatasetKind::kBlobs) {
    require(c.blobs.classes >= 2, "blob_classes: need at least 2");
    require(c.blobs.private_dims >= 1, "blob_private_dims: need at least 1");
    require(c.blobs.classes + c.blobs.private_dims <= c.blobs.features,
            "blob_features: must cover blob_classes + blob_private_dims");
    require(c.blobs.samples_per_client >= 1 && c.blobs.holdout_samples >= 1,
            "blob sample counts must be positive");
  } else if (c.dataset == DatasetKind::kCsv) {
    require(!c.csv_path.empty(), "csv_path: required for dataset csv");
  } else {
    require(!c.idx_images.empty() && !c.idx_labels.empty(), "idx_images/idx_labels: required for dataset idx");
  }
}

ExperimentConfig parse_config(std::string_view json_text, ExperimentConfig base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(!value.is_object(), key + ": config is flat, nested objects are not allowed");
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    require(it != table.end(), "unknown config key '" + key + "'");
    it->read(value, base);
  }
  validate(base);
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfig, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  for (const auto& f : fields()) f.write(j, cfg);
  return j.dump(2) + "\n";
}

ExperimentConfig desk_profile() { return {}; }

ExperimentConfig full_profile() {
  ExperimentConfig c;
  c.clients = 50;
  c.rounds = 40;
  c.local_epochs = 10;
  c.pow_difficulty = 19;
  c.consensus = ledger::ConsensusKind::kPow;
  return c;
}

}  // namespace fedunlearn
