// fedunlearn: command-line driver for training, unlearning, verification
// and ledger inspection. Exit codes: 0 ok, 2 verification failure,
// 3 configuration error, 4 internal error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedunlearn/config.hpp"
#include "fedunlearn/error.hpp"
#include "fedunlearn/harness.hpp"
#include "fedunlearn/ledger.hpp"
#include "fedunlearn/metrics.hpp"
#include "fedunlearn/offchain.hpp"

namespace fs = std::filesystem;
using namespace fedunlearn;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scenario;
  std::optional<double> alpha;
  std::optional<double> delta_t;
  std::optional<double> calibration_ratio;
  std::optional<unsigned> max_rounds;
  std::optional<std::size_t> clients;
  std::optional<unsigned> rounds;
  std::optional<unsigned> epochs;
  std::optional<double> lr;
  std::optional<std::string> consensus;
  std::optional<unsigned> difficulty;
  std::vector<ledger::NodeId> targets;
  std::optional<std::size_t> tamper_step;
  std::optional<std::string> tamper_mode;

  void attach(CLI::App* cmd, bool training_knobs) {
    cmd->add_option("--alpha", alpha, "Gompertz constant");
    cmd->add_option("--delta-t", delta_t, "calibration update scale in (0, 1]");
    cmd->add_option("--calibration-ratio", calibration_ratio, "local epoch ratio c in (0, 1]");
    cmd->add_option("--max-rounds", max_rounds, "T used by the adaptive-rounds formula");
    cmd->add_option("--scenario", scenario,
                    "honest | tamper | key-exposure | no-unlearn-baseline | retrain-from-scratch");
    cmd->add_option("--tamper-step", tamper_step, "calibration step the server cheats at");
    cmd->add_option("--tamper-mode", tamper_mode, "include-target | swap-payload");
    if (!training_knobs) return;
    cmd->add_option("--clients", clients);
    cmd->add_option("--rounds", rounds);
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--lr", lr);
    cmd->add_option("--consensus", consensus, "dpos | pow");
    cmd->add_option("--difficulty", difficulty, "PoW leading zero bits");
    cmd->add_option("--targets", targets, "client ids to forget");
  }

  ExperimentConfig apply(ExperimentConfig c) const {
    nlohmann::json j = nlohmann::json::parse(to_json(c));
    if (seed) j["seed"] = *seed;
    if (scenario) j["scenario"] = *scenario;
    if (alpha) j["alpha"] = *alpha;
    if (delta_t) j["delta_t"] = *delta_t;
    if (calibration_ratio) j["calibration_ratio"] = *calibration_ratio;
    if (max_rounds) j["max_rounds"] = *max_rounds;
    if (clients) j["clients"] = *clients;
    if (rounds) j["rounds"] = *rounds;
    if (epochs) j["local_epochs"] = *epochs;
    if (lr) j["learning_rate"] = *lr;
    if (consensus) j["consensus"] = *consensus;
    if (difficulty) j["pow_difficulty"] = *difficulty;
    if (!targets.empty()) j["targets"] = targets;
    if (tamper_step) j["tamper_step"] = *tamper_step;
    if (tamper_mode) j["tamper_mode"] = *tamper_mode;
    return parse_config(j.dump());
  }
};

ExperimentConfig base_config(const std::string& path) {
  return path.empty() ? desk_profile() : load_config(path);
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ledger::Ledger open_ledger(const fs::path& run) {
  const auto cfg = load_config(run / "config.json");
  ledger::ConsensusStub stub;
  stub.kind = cfg.consensus;
  stub.validators = cfg.validators;
  stub.difficulty = cfg.pow_difficulty;
  return ledger::Ledger(stub, ledger::Ledger::parse_dump(read_text(run / "ledger.jsonl")));
}

nlohmann::ordered_json commit_json(const ledger::HashCommit& c) {
  nlohmann::ordered_json j;
  j["hash"] = to_decimal(c.value.v);
  if (c.randomizer) j["randomizer"] = to_decimal(c.randomizer->r);
  return j;
}

void print_outcome(const harness::ScenarioOutcome& o) { std::cout << o.summary_json(); }

int run(int argc, char** argv) {
  CLI::App app{"Blockchain-backed federated unlearning experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, format = "summary";
  std::optional<std::uint64_t> round;
  Overrides ov;

  auto* train = app.add_subcommand("train", "train a federation and write a run directory");
  train->add_option("--config", config_path, "flat JSON config (defaults to the desk profile)");
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_option("--seed", ov.seed);
  ov.attach(train, true);

  auto* unlearn = app.add_subcommand("unlearn", "run the unlearning workflow on a trained run directory");
  unlearn->add_option("--run", run_dir, "run directory written by train")->required()->check(CLI::ExistingDirectory);
  ov.attach(unlearn, false);

  auto* verify = app.add_subcommand("verify", "re-check calibration commitments from public data");
  verify->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
  verify->add_option("--round", round, "only this ledger round");

  auto* led = app.add_subcommand("ledger", "inspect the chain of a run directory");
  led->require_subcommand(1);
  auto* dump = led->add_subcommand("dump", "print the chain as JSON lines");
  auto* lverify = led->add_subcommand("verify", "check hashes, links and consensus proofs");
  auto* state = led->add_subcommand("state", "contract state for one round");
  for (auto* c : {dump, lverify, state}) c->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
  state->add_option("--round", round)->required();

  auto* metrics = app.add_subcommand("metrics", "print the metrics of a run directory");
  metrics->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--format", format, "summary | csv | jsonl")
      ->check(CLI::IsMember({"summary", "csv", "jsonl"}));

  auto* scenario = app.add_subcommand("scenario", "reference, training and scenario in one go");
  scenario->add_option("--config", config_path);
  scenario->add_option("--seed", ov.seed)->required();
  scenario->add_option("--out", out_dir, "run directory");
  ov.attach(scenario, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? harness::kExitOk : harness::kExitConfigError;
  }

  if (*train) {
    const auto cfg = ov.apply(base_config(config_path));
    const auto data = harness::load_data(cfg);
    const auto reference = harness::train_reference(cfg, data);
    const auto st = harness::run_training(cfg, &reference);
    harness::write_training(out_dir, st);
    const auto& last = st.records.back();
    std::cout << "trained " << cfg.rounds << " rounds, accuracy " << last.accuracy << ", blocks "
              << st.chain->blocks().size() << "\n";
    return harness::kExitOk;
  }

  if (*unlearn) {
    auto st = harness::load_training(run_dir);
    st.cfg = ov.apply(st.cfg);
    const auto data = harness::load_data(st.cfg);
    const auto reference = harness::train_reference(st.cfg, data);
    const auto outcome = harness::run_unlearning_scenario(st, reference);
    harness::write_outcome(run_dir, st, outcome);
    print_outcome(outcome);
    return outcome.exit_code;
  }

  if (*verify) {
    bool all = true;
    for (const auto& v : harness::verify_run(run_dir, round)) {
      std::cout << "round " << v.round << ": "
                << (v.result.accepted ? "accept" : "reject:" + std::string(unlearning::to_string(v.result.reason)));
      if (!v.result.detail.empty()) std::cout << " (" << v.result.detail << ")";
      std::cout << "\n";
      all = all && v.result.accepted;
    }
    return all ? harness::kExitOk : harness::kExitVerificationFailure;
  }

  if (*led) {
    const auto chain = open_ledger(run_dir);
    if (*dump) {
      std::cout << chain.dump();
      return harness::kExitOk;
    }
    if (*lverify) {
      if (auto bad = chain.verify_chain()) {
        std::cout << "invalid at height " << *bad << "\n";
        return harness::kExitVerificationFailure;
      }
      std::cout << "ok, " << chain.blocks().size() << " blocks\n";
      return harness::kExitOk;
    }
    const auto& s = chain.state();
    nlohmann::ordered_json j;
    j["round"] = *round;
    j["local_hashes"] = nlohmann::ordered_json::object();
    for (const auto& [key, c] : s.local_hashes) {
      if (key.first == *round) j["local_hashes"][std::to_string(key.second)] = commit_json(c);
    }
    if (auto it = s.global_hashes.find(*round); it != s.global_hashes.end()) j["global_hash"] = commit_json(it->second);
    if (auto it = s.calibration_hashes.find(*round); it != s.calibration_hashes.end()) {
      j["calibration_hash"] = commit_json(it->second);
    }
    j["pending_requests"] = nlohmann::ordered_json::array();
    for (const auto& r : s.pending_requests) {
      j["pending_requests"].push_back({{"round", r.round}, {"requester", r.requester}, {"targets", r.targets}});
    }
    std::cout << j.dump(2) << "\n";
    return harness::kExitOk;
  }

  if (*metrics) {
    if (format == "csv") {
      std::cout << read_text(fs::path(run_dir) / "metrics.csv");
    } else if (format == "jsonl") {
      std::cout << read_text(fs::path(run_dir) / "metrics.jsonl");
    } else if (fs::exists(fs::path(run_dir) / "outcome.json")) {
      std::cout << read_text(fs::path(run_dir) / "outcome.json");
    } else {
      const auto records = parse_csv(read_text(fs::path(run_dir) / "metrics.csv"));
      if (records.empty()) fail(ErrorCode::kParse, "no metrics recorded");
      const auto& r = records.back();
      std::cout << "rounds " << records.size() << ", accuracy " << r.accuracy << ", loss " << r.loss
                << ", mia recall " << r.mia_recall << "\n";
    }
    return harness::kExitOk;
  }

  // scenario
  const auto cfg = ov.apply(base_config(config_path));
  auto result = harness::run_scenario(cfg);
  if (!out_dir.empty()) harness::write_outcome(out_dir, result.state, result.outcome);
  print_outcome(result.outcome);
  return result.outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig ? harness::kExitConfigError : harness::kExitInternalError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return harness::kExitInternalError;
  }
}
