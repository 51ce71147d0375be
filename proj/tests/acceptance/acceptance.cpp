// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/gmp.hpp>

#include "fedunlearn/chameleon.hpp"
#include "fedunlearn/config.hpp"
#include "fedunlearn/fl.hpp"
#include "fedunlearn/harness.hpp"
#include "fedunlearn/unlearning.hpp"

using namespace fedunlearn;
namespace ch = fedunlearn::chameleon;
namespace fs = std::filesystem;
using ledger::NodeId;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fedunlearn_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

// Desk run shared by several criteria (honest, default config, seed 1).
const harness::ScenarioRun& desk_honest() {
  static const harness::ScenarioRun run = harness::run_scenario(desk_profile());
  return run;
}

// ---------------------------------------------------------------------------

Verdict collisions() {
  const auto t0 = Clock::now();
  const auto params = ch::setup(256, 1001);
  const auto kp = ch::generate_keys(params, 1002);
  Rng rng(1003);
  int held = 0;
  for (int i = 0; i < 1000; ++i) {
    const ch::Digest m{random_below(rng, params.q)};
    const ch::Digest m_new{random_below(rng, params.q)};
    const auto r = ch::random_randomizer(kp.pk, rng);
    const auto r_new = ch::rewrite(kp.pk, kp.sk, m, m_new, r);
    held += ch::hash(kp.pk, m, r) == ch::hash(kp.pk, m_new, r_new);
  }
  const double secs = seconds_since(t0);
  return {held == 1000 && secs < 30.0 && bit_length(params.q) == 256,
          std::to_string(held) + "/1000 collisions, |q| = " + std::to_string(bit_length(params.q)) +
              " bits, " + fmt(secs) + " s"};
}

Verdict forgery_resistance() {
  const auto t0 = Clock::now();
  const auto params = ch::setup(256, 2001);
  const auto kp = ch::generate_keys(params, 2002);
  Rng rng(2003);
  const ch::Digest m{random_below(rng, params.q)};
  const auto target = ch::hash(kp.pk, m, ch::random_randomizer(kp.pk, rng));
  int forged = 0;
  for (int i = 0; i < 10000; ++i) {
    const ch::Digest m2{random_below(rng, params.q)};
    const auto r2 = ch::random_randomizer(kp.pk, rng);
    forged += m2 != m && ch::verify(kp.pk, m2, target, r2);
  }
  const double secs = seconds_since(t0);
  return {forged == 0 && secs < 60.0,
          std::to_string(forged) + " collisions in 10000 attempts, " + fmt(secs) + " s"};
}

Verdict key_exposure() {
  auto cfg = desk_profile();
  cfg.scenario = ScenarioKind::kKeyExposure;
  cfg.key_exposure_attempts = 10000;
  const auto run = harness::run_scenario(cfg);
  const auto& e = *run.outcome.exposure;
  return {e.attempts == 10000 && e.accepted == 0 && e.store_rewrites == 0 && e.chain_ok && e.store_intact,
          std::to_string(e.accepted) + "/" + std::to_string(e.attempts) + " forged rewrites accepted, " +
              std::to_string(e.store_rewrites) + " store rewrites, chain " + (e.chain_ok ? "ok" : "broken")};
}

Verdict calibration_oracle() {
  using Rational = boost::multiprecision::mpq_rational;
  Rng rng(4001);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t k = 3 + rng() % 8;                // K in [3, 10]
    const std::size_t dim = 1 + rng() % 64;             // dim <= 64
    const std::size_t targets = 1 + rng() % (k - 1);    // at least one retained
    const std::size_t retained = k - targets;
    std::vector<fl::ModelUpdate> ups(retained);
    std::vector<double> w(retained);
    for (std::size_t i = 0; i < retained; ++i) {
      ups[i].client = static_cast<NodeId>(i + 1);
      ups[i].delta.resize(dim);
      for (double& v : ups[i].delta) v = (uniform01(rng) - 0.5) * 20.0;
      w[i] = 1.0 + uniform01(rng) * 99.0;
    }
    const auto got = unlearning::calibrate_aggregate(ups, w, k);

    // Exact rational evaluation of sum(w U) / ((K - 1) sum w).
    Rational wsum = 0;
    for (double x : w) wsum += Rational(x);
    const Rational denom = Rational(static_cast<long>(k - 1)) * wsum;
    for (std::size_t d = 0; d < dim; ++d) {
      Rational num = 0;
      for (std::size_t i = 0; i < retained; ++i) num += Rational(w[i]) * Rational(ups[i].delta[d]);
      const double exact = static_cast<double>(Rational(num / denom));
      worst = std::max(worst, std::abs(exact - got.delta[d]));
    }
  }
  return {worst <= 1e-12, "max abs error " + fmt(worst, 3) + " over 100 instances"};
}

Verdict contribution_math() {
  Rng rng(5001);
  double worst_mean = 0.0;
  for (int h = 0; h < 100; ++h) {
    unlearning::ContributionTracker tracker;
    const std::size_t len = 1 + rng() % 60;
    double tilde = 0.0, sum = 0.0;
    for (std::size_t t = 1; t <= len; ++t) {
      const double theta = uniform01(rng) * std::numbers::pi;
      sum += theta;
      tilde = tracker.update(7, theta, t);
    }
    worst_mean = std::max(worst_mean, std::abs(tilde - sum / double(len)));
  }

  // Four retained clients equal to the target: T~ = 0.75 T before rounding.
  bool quarter_exact = true;
  for (unsigned T : {4u, 10u, 20u, 40u, 100u}) {
    for (double theta : {0.0, 0.3, 1.0, 1.7, 3.1}) {
      const double f = unlearning::gompertz_contribution(theta, 1.0);
      const std::vector<double> target{f}, retained(4, f);
      quarter_exact = quarter_exact && *unlearning::adaptive_rounds_exact(target, retained, T) == 0.75 * T;
    }
  }

  // Direct evaluation of the formula on random contributions.
  double worst_direct = 0.0;
  for (int i = 0; i < 100; ++i) {
    const unsigned T = 1 + rng() % 100;
    const double alpha = 0.5 + uniform01(rng) * 2.0;
    std::vector<double> tf(1 + rng() % 3), rf(1 + rng() % 9);
    for (double& f : tf) f = unlearning::gompertz_contribution(uniform01(rng) * std::numbers::pi, alpha);
    for (double& f : rf) f = unlearning::gompertz_contribution(uniform01(rng) * std::numbers::pi, alpha);
    const double st = std::accumulate(tf.begin(), tf.end(), 0.0);
    const double sr = std::accumulate(rf.begin(), rf.end(), 0.0);
    const double direct = (1.0 - st / sr) * T;
    worst_direct = std::max(worst_direct, std::abs(*unlearning::adaptive_rounds_exact(tf, rf, T) - direct));
  }

  unlearning::ContributionTracker tracker;
  for (NodeId id = 1; id <= 5; ++id) tracker.update(id, 1.0, 1);
  const std::vector<NodeId> retained{2, 3, 4, 5};
  const unsigned t40 = unlearning::adaptive_rounds({1}, tracker, retained, 1.0, 40);

  return {worst_mean <= 1e-12 && quarter_exact && worst_direct <= 1e-12 && t40 == 30,
          "running-mean error " + fmt(worst_mean, 3) + ", 0.75T exact " + (quarter_exact ? "yes" : "no") +
              ", direct error " + fmt(worst_direct, 3) + ", T=40 -> " + std::to_string(t40)};
}

int cli_exit(const std::string& args) {
#ifdef FEDUNLEARN_CLI
  const std::string cmd = std::string("\"") + FEDUNLEARN_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#else
  (void)args;
  return -1;
#endif
}

Verdict verification_soundness() {
  const auto& honest = desk_honest();
  const auto& u = *honest.outcome.unlearning;
  bool all_accept = u.completed() && !u.steps.empty();
  for (const auto& s : u.steps) all_accept = all_accept && s.verification.accepted;

  const auto dir = scratch("honest");
  harness::write_outcome(dir, honest.state, honest.outcome);
  std::size_t public_accepts = 0;
  const auto public_checks = harness::verify_run(dir);
  for (const auto& c : public_checks) public_accepts += c.result.accepted;
  all_accept = all_accept && public_accepts == public_checks.size() && public_checks.size() == u.steps.size();

  auto cfg = desk_profile();
  cfg.scenario = ScenarioKind::kTamper;
  cfg.tamper_mode = TamperMode::kIncludeTarget;
  cfg.tamper_step = 3;
  const auto tamper = harness::run_scenario(cfg);
  const auto& t = *tamper.outcome.unlearning;
  bool caught = t.failed_step == cfg.tamper_step && tamper.outcome.exit_code == harness::kExitVerificationFailure;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    caught = caught && t.steps[i].verification.accepted == (i != cfg.tamper_step);
  }
  const std::uint64_t bad_round = cfg.rounds + cfg.tamper_step - 1;
  const auto tdir = scratch("tamper");
  harness::write_outcome(tdir, tamper.state, tamper.outcome);
  for (const auto& c : harness::verify_run(tdir)) caught = caught && c.result.accepted == (c.round != bad_round);

  std::string cli = "cli not built";
  bool cli_ok = true;
#ifdef FEDUNLEARN_CLI
  const int code = cli_exit("scenario --seed 1 --scenario tamper --tamper-step 3");
  cli_ok = code == 2;
  cli = "cli exit " + std::to_string(code);
#endif
  fs::remove_all(dir);
  fs::remove_all(tdir);
  return {cfg.clients == 10 && cfg.rounds == 20 && all_accept && caught && cli_ok,
          "honest " + std::to_string(u.steps.size()) + "/" + std::to_string(u.steps.size()) +
              " steps accepted (public recheck " + std::to_string(public_accepts) + "), tamper at step " +
              std::to_string(cfg.tamper_step) + " rejected at ledger round " + std::to_string(bad_round) +
              " with exit " + std::to_string(tamper.outcome.exit_code) + ", " + cli};
}

bool contains(const std::vector<std::uint8_t>& hay, const std::vector<std::uint8_t>& needle) {
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

Verdict erasure() {
  const auto cfg = desk_profile();
  const auto data = harness::load_data(cfg);
  const auto reference = harness::train_reference(cfg, data);
  auto st = harness::run_training(cfg, &reference);

  std::vector<std::vector<std::uint8_t>> originals;
  for (NodeId t : cfg.targets) {
    for (const auto& key : st.store.keys_owned_by(t)) {
      originals.push_back(ch::serialize_update(st.store.get(key).payload));
    }
  }
  const auto before_state = st.chain->state();
  const auto before_blocks = st.chain->blocks();
  const bool present_before =
      std::all_of(originals.begin(), originals.end(), [&](const auto& o) { return contains(st.store.raw_bytes(), o); });

  const auto out = harness::run_unlearning_scenario(st, reference);

  const auto raw = st.store.raw_bytes();
  std::size_t found = 0;
  for (const auto& o : originals) found += contains(raw, o);
  // The saved store is scanned as well.
  const auto dir = scratch("erasure");
  st.store.save(dir);
  std::vector<std::uint8_t> disk;
  for (const auto& f : fs::directory_iterator(dir)) {
    const auto text = slurp(f.path());
    disk.insert(disk.end(), text.begin(), text.end());
  }
  for (const auto& o : originals) found += contains(disk, o);
  fs::remove_all(dir);

  const auto& after = st.chain->state();
  bool hashes_same = std::equal(before_blocks.begin(), before_blocks.end(), st.chain->blocks().begin());
  for (const auto& [k, c] : before_state.local_hashes) hashes_same = hashes_same && after.local_hashes.at(k) == c;
  for (const auto& [k, c] : before_state.global_hashes) hashes_same = hashes_same && after.global_hashes.at(k) == c;
  const bool chain_ok = !st.chain->verify_chain().has_value();
  const bool rewrites_ok = out.unlearning && out.unlearning->rewrites.all_succeeded() &&
                           out.unlearning->rewrites.entries.size() == originals.size();

  return {present_before && found == 0 && hashes_same && chain_ok && rewrites_ok && !originals.empty(),
          std::to_string(found) + " of " + std::to_string(originals.size()) +
              " original payloads found after rewriting, on-chain hashes " + (hashes_same ? "unchanged" : "changed") +
              ", verify_chain " + (chain_ok ? "ok" : "failed")};
}

Verdict unlearning_effect() {
  const auto& o = desk_honest().outcome;
  const double drop = o.mia_before.recall - o.mia_after.recall;
  const double gap = std::abs(o.final_eval.accuracy - o.reference_eval.accuracy);
  return {o.mia_after.recall < o.mia_before.recall && drop >= 0.1 && gap <= 0.05,
          "MIA recall " + fmt(o.mia_before.recall) + " -> " + fmt(o.mia_after.recall) + " (drop " + fmt(drop) +
              "), accuracy " + fmt(o.final_eval.accuracy) + " vs reference " + fmt(o.reference_eval.accuracy)};
}

Verdict adaptive_time() {
  const auto& o = desk_honest().outcome;
  if (!o.time) return {false, "no time report"};
  const auto& t = *o.time;
  const bool strictly_less = t.t_tilde >= t.rounds || t.adaptive_ms < t.full_ms;
  const bool enough = t.measured_reduction_rounds >= 0.5 * t.estimate_rounds;
  return {strictly_less && enough && t.t_tilde < t.rounds,
          "T~ = " + std::to_string(t.t_tilde) + " of " + std::to_string(t.rounds) + ", adaptive " +
              fmt(t.adaptive_ms, 8) + " ms vs full " + fmt(t.full_ms, 8) + " ms, measured reduction " +
              fmt(t.measured_reduction_rounds) + " rounds vs estimate " + fmt(t.estimate_rounds)};
}

Verdict gradient_check() {
  Rng rng(10001);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    fl::ModelShape s;
    s.inputs = 2 + rng() % 5;
    s.hidden = rng() % 6;
    s.classes = 2 + rng() % 3;
    s.activation = inst % 2 ? fl::Activation::kRelu : fl::Activation::kTanh;
    const auto m = fl::init_model(s, 10000 + inst, 0.5);
    fl::Dataset d{s.inputs, {}, {}};
    const std::size_t n = 1 + rng() % 8;
    std::vector<double> x(s.inputs);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : x) v = (uniform01(rng) - 0.5) * 4.0;
      d.append(x, static_cast<int>(rng() % s.classes));
    }
    std::vector<std::size_t> batch(n);
    std::iota(batch.begin(), batch.end(), std::size_t{0});
    std::vector<double> g(m.weights.size());
    fl::loss_and_gradient(s, m.weights, d, batch, g);

    double diff = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      auto wp = m.weights, wm = m.weights;
      const double h = 1e-6;
      wp[j] += h;
      wm[j] -= h;
      const double fd = (fl::loss_and_gradient(s, wp, d, batch, {}) - fl::loss_and_gradient(s, wm, d, batch, {})) / (2 * h);
      diff += (fd - g[j]) * (fd - g[j]);
      scale += (std::abs(fd) + std::abs(g[j])) * (std::abs(fd) + std::abs(g[j]));
    }
    const double rel = scale > 0.0 ? std::sqrt(diff) / std::sqrt(scale) : 0.0;
    worst = std::max(worst, rel);
  }
  return {worst < 1e-5, "max relative error " + fmt(worst, 3) + " over 50 instances"};
}

Verdict determinism() {
  const auto cfg = desk_profile();
  const auto a_dir = scratch("det_a"), b_dir = scratch("det_b");
  const auto a = harness::run_scenario(cfg);
  harness::write_outcome(a_dir, a.state, a.outcome);
  const auto b = harness::run_scenario(cfg);
  harness::write_outcome(b_dir, b.state, b.outcome);
  bool same = true;
  std::string diffs;
  for (const char* f : {"metrics.csv", "metrics.jsonl", "ledger.jsonl", "outcome.json"}) {
    const auto x = slurp(a_dir / f), y = slurp(b_dir / f);
    if (x.empty() || x != y) {
      same = false;
      diffs += std::string(" ") + f;
    }
  }
  fs::remove_all(a_dir);
  fs::remove_all(b_dir);
  return {same, same ? "metrics.csv, metrics.jsonl, ledger.jsonl and outcome.json byte-identical"
                     : "differs:" + diffs};
}

Verdict consensus_invariance() {
  auto dpos = desk_profile();
  dpos.consensus = ledger::ConsensusKind::kDpos;
  auto pow = dpos;
  pow.consensus = ledger::ConsensusKind::kPow;
  const auto a = harness::run_scenario(dpos);
  const auto b = harness::run_scenario(pow);
  const bool state_same = a.state.chain->state() == b.state.chain->state();
  const auto lv_a = a.state.clock->count(OpClass::kVerify), lv_b = b.state.clock->count(OpClass::kVerify);
  const auto lr_a = a.state.clock->count(OpClass::kRewrite), lr_b = b.state.clock->count(OpClass::kRewrite);
  const bool blocks_differ = a.state.chain->dump() != b.state.chain->dump();
  return {state_same && lv_a == lv_b && lr_a == lr_b && a.outcome.exit_code == 0 && b.outcome.exit_code == 0,
          std::string("ContractState ") + (state_same ? "identical" : "differs") + ", LV " + std::to_string(lv_a) +
              "/" + std::to_string(lv_b) + ", LR " + std::to_string(lr_a) + "/" + std::to_string(lr_b) +
              ", blocks " + (blocks_differ ? "differ" : "identical") + " (proposers and proofs)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"chameleon collisions", collisions},
      {"collision resistance", forgery_resistance},
      {"key-exposure freshness", key_exposure},
      {"calibration oracle equivalence", calibration_oracle},
      {"contribution math", contribution_math},
      {"verification soundness", verification_soundness},
      {"erasure completeness", erasure},
      {"unlearning effect", unlearning_effect},
      {"adaptive time", adaptive_time},
      {"gradient check", gradient_check},
      {"determinism", determinism},
      {"consensus invariance", consensus_invariance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << i + 1 << "  " << criteria[i].first
              << ": " << v.detail << " [" << fmt(seconds_since(t0), 3) << " s]\n"
              << std::flush;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
