#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedunlearn/error.hpp"
#include "fedunlearn/harness.hpp"

using namespace fedunlearn;
using namespace fedunlearn::harness;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.clients = 5;
  c.rounds = 5;
  c.local_epochs = 2;
  c.lambda = 32;
  c.blobs.samples_per_client = 40;
  c.blobs.holdout_samples = 80;
  c.seed = 3;
  return c;
}

fl::Dataset points(std::initializer_list<double> xs) {
  fl::Dataset d{1, {}, {}};
  for (double x : xs) d.append(std::vector<double>{x}, 0);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Mia, HandComputedFixture) {
  // logit gap 2x for label 0: loss ln(1 + e^{-2x}); tau = loss at x = 0 = ln 2.
  const fl::GlobalModel m{{1, 0, 2, fl::Activation::kTanh}, {1.0, -1.0, 0.0, 0.0}, 0};
  const auto r = mia_probe(m, points({2.0, -2.0}), points({1.0, -1.0}), points({0.0}));
  EXPECT_NEAR(r.threshold, 0.6931471805599453, 1e-15);
  EXPECT_EQ(r.predicted_members, 2u);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
}

TEST(Mia, NothingPredictedGivesZeroPrecision) {
  const fl::GlobalModel m{{1, 0, 2, fl::Activation::kTanh}, {1.0, -1.0, 0.0, 0.0}, 0};
  const auto r = mia_probe(m, points({-2.0}), points({-1.0}), points({3.0}));
  EXPECT_EQ(r.predicted_members, 0u);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
}

TEST(Mia, MemorizedMembersAreAllFound) {
  const fl::GlobalModel m{{1, 0, 2, fl::Activation::kTanh}, {1.0, -1.0, 0.0, 0.0}, 0};
  const auto r = mia_probe(m, points({5.0, 6.0, 7.0}), points({-5.0, -6.0}), points({0.0, 0.5, -0.5}));
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
}

TEST(Mia, IndistinguishableSetsGiveChancePrecision) {
  const fl::GlobalModel m{{1, 0, 2, fl::Activation::kTanh}, {1.0, -1.0, 0.0, 0.0}, 0};
  const auto same = points({2.0, -2.0, 1.0, -1.0});
  const auto r = mia_probe(m, same, same, points({0.0}));
  EXPECT_DOUBLE_EQ(r.precision, 0.5);  // member fraction
  EXPECT_GE(r.recall, 0.0);
  EXPECT_LE(r.recall, 1.0);
}

TEST(Mia, Errors) {
  const fl::GlobalModel m{{1, 0, 2, fl::Activation::kTanh}, {1.0, -1.0, 0.0, 0.0}, 0};
  try {
    mia_probe(m, points({1.0}), points({1.0}), points({}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateThreshold);
  }
  EXPECT_THROW(mia_probe(m, points({}), points({1.0}), points({1.0})), Error);
}

TEST(Harness, TrainingLayoutOnChain) {
  const auto cfg = small_config();
  const auto st = run_training(cfg);
  const auto& s = st.chain->state();
  EXPECT_EQ(s.registered_keys.size(), cfg.clients + 1);
  EXPECT_EQ(s.local_hashes.size(), cfg.clients * cfg.rounds);
  EXPECT_EQ(s.global_hashes.size(), cfg.rounds + 1);  // M^0 .. M^T
  EXPECT_EQ(st.history.size(), cfg.rounds + 1);
  EXPECT_EQ(st.records.size(), cfg.rounds);
  for (NodeId id = 1; id <= cfg.clients; ++id) EXPECT_EQ(st.tracker.last_round(id), cfg.rounds);
  // Every global hash opens to the stored model of that round.
  for (const auto& [round, commit] : s.global_hashes) {
    EXPECT_EQ(st.store.get(commit.value).payload, st.history.at(round).weights);
  }
  EXPECT_FALSE(st.chain->verify_chain().has_value());
}

TEST(Harness, RecordTimesDecompose) {
  const auto run = run_scenario(small_config());
  auto all = run.state.records;
  all.insert(all.end(), run.outcome.records.begin(), run.outcome.records.end());
  ASSERT_FALSE(all.empty());
  for (const auto& r : all) {
    const double sum = r.time_train + r.time_aggregate + r.time_commit + r.time_seal + r.time_lv + r.time_lr;
    EXPECT_DOUBLE_EQ(r.time_total, sum);
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 1.0);
    EXPECT_GE(r.mia_recall, 0.0);
    EXPECT_LE(r.mia_recall, 1.0);
    EXPECT_GE(r.mia_precision, 0.0);
    EXPECT_LE(r.mia_precision, 1.0);
  }
  const auto& clock = *run.state.clock;
  double sum = 0.0;
  for (std::size_t c = 0; c < kOpClassCount; ++c) sum += clock.time(OpClass(c));
  EXPECT_DOUBLE_EQ(clock.total(), sum);
}

TEST(Harness, DeskTrainingIsAccurate) {
  const auto st = run_training(desk_profile());
  EXPECT_GT(st.records.back().accuracy, 0.9);
}

TEST(Harness, TimeReportArithmetic) {
  ExperimentConfig cfg;
  cfg.rounds = 20;
  cfg.delta_t = 1.0;
  cfg.calibration_ratio = 0.5;
  const auto r = make_time_report(cfg, 18, 150.0, 200.0);
  EXPECT_DOUBLE_EQ(r.measured_reduction_rounds, 5.0);
  EXPECT_DOUBLE_EQ(r.estimate_rounds, 4.0);
  cfg.max_rounds = 10;
  EXPECT_EQ(make_time_report(cfg, 8, 1, 2).rounds, 10u);
}

TEST(Harness, ScenarioIsDeterministic) {
  const auto a = run_scenario(small_config());
  const auto b = run_scenario(small_config());
  EXPECT_EQ(to_csv(a.outcome.records), to_csv(b.outcome.records));
  EXPECT_EQ(a.state.chain->dump(), b.state.chain->dump());
  EXPECT_EQ(a.outcome.summary_json(), b.outcome.summary_json());
  auto other = small_config();
  other.seed = 4;
  EXPECT_NE(run_scenario(other).state.chain->dump(), a.state.chain->dump());
}

TEST(Harness, EveryScenarioRuns) {
  for (auto kind : {ScenarioKind::kHonest, ScenarioKind::kTamper, ScenarioKind::kKeyExposure,
                    ScenarioKind::kNoUnlearnBaseline, ScenarioKind::kRetrainFromScratch}) {
    auto cfg = small_config();
    cfg.scenario = kind;
    cfg.tamper_step = 1;
    cfg.key_exposure_attempts = 50;
    const auto run = run_scenario(cfg);
    const int expected = kind == ScenarioKind::kTamper ? kExitVerificationFailure : kExitOk;
    EXPECT_EQ(run.outcome.exit_code, expected) << to_string(kind);
    EXPECT_FALSE(run.outcome.first_invalid_height.has_value());
    if (kind == ScenarioKind::kKeyExposure) {
      EXPECT_EQ(run.outcome.exposure->accepted, 0u);
      EXPECT_EQ(run.outcome.exposure->store_rewrites, 0u);
      EXPECT_TRUE(run.outcome.exposure->store_intact);
    }
  }
}

TEST(Harness, RunDirectoryRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "fedunlearn_run_test";
  std::filesystem::remove_all(dir);
  auto cfg = small_config();
  const auto st = run_training(cfg);
  write_training(dir, st);
  for (const char* f : {"config.json", "ledger.jsonl", "keys.json", "tracker.json", "model.bin", "metrics.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  auto loaded = load_training(dir);
  EXPECT_EQ(loaded.chain->dump(), st.chain->dump());
  EXPECT_EQ(loaded.store.raw_bytes(), st.store.raw_bytes());
  ASSERT_EQ(loaded.history.size(), st.history.size());
  EXPECT_EQ(loaded.final_model().weights, st.final_model().weights);
  EXPECT_EQ(loaded.tracker.history(2), st.tracker.history(2));

  // Unlearning from disk matches unlearning in memory.
  const auto data = load_data(cfg);
  const auto reference = train_reference(cfg, data);
  auto fresh = run_training(cfg, &reference);
  const auto mem = run_unlearning_scenario(fresh, reference);
  const auto disk = run_unlearning_scenario(loaded, reference);
  EXPECT_EQ(mem.final_model.weights, disk.final_model.weights);
  write_outcome(dir, loaded, disk);
  EXPECT_TRUE(std::filesystem::exists(dir / "outcome.json"));

  const auto checks = verify_run(dir);
  EXPECT_EQ(checks.size(), disk.unlearning->steps.size());
  for (const auto& c : checks) EXPECT_TRUE(c.result.accepted) << c.round;
  EXPECT_EQ(verify_run(dir, 0).size(), 1u);

  // Corrupting the stored chain is refused on load.
  auto text = slurp(dir / "ledger.jsonl");
  const auto pos = text.find("\"hash\":\"");
  ASSERT_NE(pos, std::string::npos);
  text[pos + 8] = text[pos + 8] == '1' ? '2' : '1';
  std::ofstream(dir / "ledger.jsonl", std::ios::binary) << text;
  EXPECT_THROW(load_training(dir), Error);
  std::filesystem::remove_all(dir);
}
