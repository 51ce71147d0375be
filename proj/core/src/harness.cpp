#include "fedunlearn/harness.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedunlearn/error.hpp"

namespace fedunlearn::harness {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Sub-seed tags.
constexpr std::uint64_t kTagParams = 0x50415241ULL;
constexpr std::uint64_t kTagKeys = 0x4B455953ULL;
constexpr std::uint64_t kTagConsensus = 0x434F4E53ULL;
constexpr std::uint64_t kTagInit = 0x494E4954ULL;
constexpr std::uint64_t kTagData = 0x44415441ULL;
constexpr std::uint64_t kTagRand = 0x52414E44ULL;
constexpr std::uint64_t kTagExposure = 0x4B455850ULL;
constexpr std::uint64_t kTagUnlearn = 0x554E4C52ULL;

NodeSet target_set(const ExperimentConfig& cfg) { return {cfg.targets.begin(), cfg.targets.end()}; }

const fl::Dataset& non_members(const fl::FederatedData& data) {
  return data.target_holdout.size() ? data.target_holdout : data.test;
}

std::string verification_text(const unlearning::VerifyResult& v) {
  if (v.accepted) return "accept";
  return "reject:" + std::string(unlearning::to_string(v.reason));
}

MetricsRecord make_record(const TrainedState& st, std::string phase, std::int64_t round,
                          const fl::GlobalModel& model, const SimClock::Snapshot& elapsed,
                          const fl::GlobalModel* reference, std::string verification) {
  MetricsRecord r;
  r.scenario = std::string(to_string(st.cfg.scenario));
  r.phase = std::move(phase);
  r.round = round;
  const auto eval = fl::evaluate(model, st.data.test);
  r.accuracy = eval.accuracy;
  r.loss = eval.loss;
  if (st.members.size() && non_members(st.data).size() && st.data.mia_calibration.size()) {
    const auto mia = mia_probe(model, st.members, non_members(st.data), st.data.mia_calibration);
    r.mia_precision = mia.precision;
    r.mia_recall = mia.recall;
  }
  r.set_times(elapsed);
  r.deviation = reference ? fl::l2_distance(model.weights, reference->weights) : 0.0;
  r.verification = std::move(verification);
  return r;
}

void must_accept(const ledger::Receipt& receipt) {
  if (!receipt.accepted) fail(receipt.error.value_or(ErrorCode::kInvalidArgument), receipt.message);
}

unlearning::UnlearningOptions unlearning_options(const ExperimentConfig& cfg) {
  unlearning::UnlearningOptions o;
  o.alpha = cfg.alpha;
  o.delta_t = cfg.delta_t;
  o.calibration_ratio = cfg.calibration_ratio;
  o.max_rounds = cfg.max_rounds ? cfg.max_rounds : cfg.rounds;
  o.strict_calibration = cfg.strict_calibration;
  o.rewrite_scale = cfg.rewrite_scale;
  o.seed = mix_seed(cfg.seed, kTagUnlearn);
  return o;
}

ledger::ConsensusStub consensus_stub(const ExperimentConfig& cfg) {
  ledger::ConsensusStub stub;
  stub.kind = cfg.consensus;
  stub.validators = cfg.validators;
  stub.difficulty = cfg.pow_difficulty;
  stub.seed = mix_seed(cfg.seed, kTagConsensus);
  return stub;
}

void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f || !(f << body) || !f.flush()) fail(ErrorCode::kIo, "cannot write " + p.string());
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json parse_json_file(const std::filesystem::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, p.string() + ": " + e.what());
  }
}

// Public half of the run: group, every registered key, aggregation weights.
struct PublicKeys {
  chameleon::PublicKey server;
  std::map<NodeId, chameleon::PublicKey> clients;
  std::map<NodeId, double> weights;
};

PublicKeys read_keys(const std::filesystem::path& dir) {
  const json j = parse_json_file(dir / "keys.json");
  PublicKeys out;
  try {
    const BigInt p = from_decimal(j.at("p").get<std::string>());
    const BigInt q = from_decimal(j.at("q").get<std::string>());
    const BigInt g = from_decimal(j.at("g").get<std::string>());
    out.server = {p, q, g, from_decimal(j.at("server_h").get<std::string>())};
    for (const auto& c : j.at("clients")) {
      const auto id = c.at("id").get<NodeId>();
      out.clients[id] = {p, q, g, from_decimal(c.at("h").get<std::string>())};
      out.weights[id] = c.at("weight").get<double>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("keys.json: ") + e.what());
  }
  return out;
}

}  // namespace

MiaResult mia_probe(const fl::GlobalModel& model, const fl::Dataset& members,
                    const fl::Dataset& non_members, const fl::Dataset& calibration) {
  if (calibration.size() == 0) fail(ErrorCode::kDegenerateThreshold, "empty MIA calibration set");
  if (members.size() == 0 || non_members.size() == 0) {
    fail(ErrorCode::kEmptyInput, "MIA needs members and non-members");
  }
  const auto cal = fl::per_example_loss(model.shape, model.weights, calibration);
  MiaResult out;
  out.threshold = std::accumulate(cal.begin(), cal.end(), 0.0) / double(cal.size());

  std::size_t tp = 0, fp = 0;
  for (double l : fl::per_example_loss(model.shape, model.weights, members)) tp += l < out.threshold;
  for (double l : fl::per_example_loss(model.shape, model.weights, non_members)) fp += l < out.threshold;
  out.predicted_members = tp + fp;
  out.precision = out.predicted_members ? double(tp) / double(out.predicted_members) : 0.0;
  out.recall = double(tp) / double(members.size());
  return out;
}

fl::FederatedData load_data(const ExperimentConfig& cfg) {
  const std::uint64_t seed = mix_seed(cfg.seed, kTagData);
  if (cfg.dataset == DatasetKind::kBlobs) {
    return fl::make_blobs(cfg.blobs, cfg.clients, target_set(cfg), seed);
  }
  const fl::Dataset pool = cfg.dataset == DatasetKind::kCsv
                               ? fl::load_csv(cfg.csv_path)
                               : fl::load_idx(cfg.idx_images, cfg.idx_labels, cfg.idx_limit);
  // 80% to clients, 10% test, 10% MIA threshold calibration.
  const std::size_t held = pool.size() / 10;
  if (pool.size() < cfg.clients + 2 * held || held == 0) {
    fail(ErrorCode::kConfig, "dataset too small for the configured clients");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  fl::FederatedData out;
  fl::Dataset train{pool.dim, {}, {}};
  out.test = out.mia_calibration = out.target_holdout = fl::Dataset{pool.dim, {}, {}};
  for (std::size_t i = 0; i < order.size(); ++i) {
    fl::Dataset& dst = i < held ? out.test : i < 2 * held ? out.mia_calibration : train;
    dst.append(pool.row(order[i]), pool.labels[order[i]]);
  }
  out.clients = fl::partition_iid(train, cfg.clients, seed);
  return out;
}

fl::ModelShape model_shape(const ExperimentConfig& cfg, const fl::FederatedData& data) {
  fl::ModelShape s;
  s.inputs = data.test.dim;
  s.hidden = cfg.hidden;
  s.activation = cfg.activation;
  if (cfg.dataset == DatasetKind::kBlobs) {
    s.classes = cfg.blobs.classes;
  } else {
    int top = 0;
    auto scan = [&](const fl::Dataset& d) {
      for (int l : d.labels) top = std::max(top, l);
    };
    for (const auto& c : data.clients) scan(c.data);
    scan(data.test);
    scan(data.mia_calibration);
    s.classes = static_cast<std::size_t>(top) + 1;
  }
  return s;
}

fl::TrainConfig train_config(const ExperimentConfig& cfg) {
  fl::TrainConfig t;
  t.learning_rate = cfg.learning_rate;
  t.local_epochs = cfg.local_epochs;
  t.batch_size = cfg.batch_size;
  t.rounds = cfg.rounds;
  t.clients = cfg.clients;
  t.seed = cfg.seed;
  return t;
}

fl::Dataset target_members(const ExperimentConfig& cfg, const fl::FederatedData& data) {
  fl::Dataset out{data.test.dim, {}, {}};
  const NodeSet targets = target_set(cfg);
  for (const auto& c : data.clients) {
    if (!targets.contains(c.client)) continue;
    for (std::size_t i = 0; i < c.data.size(); ++i) out.append(c.data.row(i), c.data.labels[i]);
  }
  return out;
}

fl::GlobalModel train_reference(const ExperimentConfig& cfg, const fl::FederatedData& data,
                                std::vector<fl::GlobalModel>* per_round) {
  const NodeSet targets = target_set(cfg);
  const auto train = train_config(cfg);
  fl::GlobalModel model = fl::init_model(model_shape(cfg, data), mix_seed(cfg.seed, kTagInit));
  for (unsigned t = 0; t < cfg.rounds; ++t) {
    std::vector<fl::ModelUpdate> ups;
    std::vector<double> ws;
    for (const auto& c : data.clients) {
      if (targets.contains(c.client)) continue;
      ups.push_back(fl::local_train(model, c, train));
      ws.push_back(c.weight);
    }
    model = fl::apply_update(model, fl::fedavg_aggregate(ups, ws));
    if (per_round) per_round->push_back(model);
  }
  return model;
}

TrainedState run_training(const ExperimentConfig& cfg, const fl::GlobalModel* reference) {
  validate(cfg);
  TrainedState st;
  st.cfg = cfg;
  st.data = load_data(cfg);
  st.members = target_members(cfg, st.data);
  st.shape = model_shape(cfg, st.data);
  st.train = train_config(cfg);

  st.params = chameleon::setup(cfg.lambda, mix_seed(cfg.seed, kTagParams));
  st.server_keys = chameleon::generate_keys(st.params, mix_seed(cfg.seed, kTagKeys, kServerId));
  for (const auto& c : st.data.clients) {
    st.participants.push_back(
        {c.client, chameleon::generate_keys(st.params, mix_seed(cfg.seed, kTagKeys, c.client)), c});
  }

  st.chain.emplace(consensus_stub(cfg), cfg.costs, st.clock.get());
  auto& chain = *st.chain;
  SimClock& clock = *st.clock;
  const auto start = clock.snapshot();

  // Key registrations, then the initial model commitment.
  must_accept(chain.submit_next(ledger::TxKind::kPublicKeyRegistration, 0, kServerId,
                                ledger::KeyRegistration{st.server_keys.pk}));
  for (const auto& p : st.participants) {
    must_accept(chain.submit_next(ledger::TxKind::kPublicKeyRegistration, 0, p.id,
                                  ledger::KeyRegistration{p.keys.pk}));
  }
  chain.seal_block();

  Rng server_rng(mix_seed(cfg.seed, kTagRand, kServerId));
  auto commit_global = [&](const fl::GlobalModel& m) {
    const auto r = chameleon::random_randomizer(st.server_keys.pk, server_rng);
    const auto key = st.store.put(kServerId, m.weights, st.server_keys.pk, r);
    must_accept(chain.submit_next(ledger::TxKind::kCommitGlobalHash, m.round, kServerId,
                                  ledger::HashCommit{key, std::nullopt}));
    chain.seal_block();
  };

  fl::GlobalModel model = fl::init_model(st.shape, mix_seed(cfg.seed, kTagInit));
  commit_global(model);
  st.history.push_back(model);

  std::map<NodeId, double> weights;
  for (const auto& p : st.participants) weights[p.id] = p.data.weight;

  for (unsigned t = 0; t < cfg.rounds; ++t) {
    try {
      // Clients: local training, off-chain storage, on-chain hash.
      for (const auto& p : st.participants) {
        auto u = fl::local_train(model, p.data, st.train);
        clock.charge(OpClass::kTrain,
                     cfg.costs.train_ms_per_sample_epoch * double(p.data.data.size()) * cfg.local_epochs);
        Rng crng(mix_seed(cfg.seed, kTagRand, p.id, t));
        const auto r = chameleon::random_randomizer(p.keys.pk, crng);
        const auto key = st.store.put(p.id, std::move(u.delta), p.keys.pk, r);
        must_accept(chain.submit_next(ledger::TxKind::kCommitLocalHash, t, p.id,
                                      ledger::HashCommit{key, std::nullopt}));
      }
      chain.seal_block();

      // Server: collect committed updates, aggregate, apply, commit.
      std::vector<fl::ModelUpdate> ups;
      std::vector<double> ws;
      for (const auto& [id, key] : chain.query_hashes(t)) {
        ups.push_back({st.store.get(key).payload, id, t});
        ws.push_back(weights.at(id));
      }
      const auto agg = fl::fedavg_aggregate(ups, ws);
      clock.charge(OpClass::kAggregate, cfg.costs.aggregate_ms_per_update * double(ups.size()), ups.size());
      model = fl::apply_update(model, agg);
      for (const auto& u : ups) st.tracker.update(u.client, unlearning::compute_theta(u.delta, agg.delta), t + 1);
      commit_global(model);
    } catch (const Error& e) {
      throw Error(e.code(), "training round " + std::to_string(t) + ": " + e.what());
    }
    st.history.push_back(model);
    st.records.push_back(make_record(st, "train", t + 1, model, SimClock::diff(clock.snapshot(), start),
                                     reference, "n/a"));
  }
  return st;
}

unlearning::UnlearnRequest submit_request(TrainedState& st) {
  unlearning::UnlearnRequest req{target_set(st.cfg), st.cfg.unlearn_round};
  must_accept(st.chain->submit_next(ledger::TxKind::kUnlearnRequest, req.issued_round,
                                    st.cfg.targets.front(), ledger::UnlearnBody{st.cfg.targets}));
  st.chain->seal_block();
  return req;
}

double full_retrain_time(const TrainedState& st, const unlearning::UnlearnRequest& request) {
  SimClock clock;
  ledger::Ledger chain(st.chain->consensus(), st.chain->blocks(), st.cfg.costs, &clock);
  offchain::OffchainStore store = st.store.clone();
  unlearning::UnlearningContext ctx{chain,
                                    store,
                                    st.participants,
                                    st.server_keys,
                                    kServerId,
                                    st.tracker,
                                    st.history.at(request.issued_round),
                                    st.cfg.rounds,
                                    st.train,
                                    st.cfg.costs,
                                    &clock,
                                    {},
                                    {}};
  auto opts = unlearning_options(st.cfg);
  opts.force_rounds = opts.max_rounds;
  opts.calibration_ratio = 1.0;
  return unlearning::run_unlearning(request, ctx, opts).retrain_time.total();
}

TimeReport make_time_report(const ExperimentConfig& cfg, unsigned t_tilde, double adaptive_ms,
                            double full_ms) {
  TimeReport r;
  r.rounds = cfg.max_rounds ? cfg.max_rounds : cfg.rounds;
  r.t_tilde = t_tilde;
  r.adaptive_ms = adaptive_ms;
  r.full_ms = full_ms;
  const double per_round = full_ms / double(r.rounds);
  r.measured_reduction_rounds = per_round > 0.0 ? (full_ms - adaptive_ms) / per_round : 0.0;
  r.estimate_rounds = (cfg.delta_t / cfg.calibration_ratio) * (double(r.rounds) - double(t_tilde));
  return r;
}

namespace {

KeyExposureReport key_exposure_attack(TrainedState& st) {
  const NodeSet targets = target_set(st.cfg);
  const auto& leaked = std::find_if(st.participants.begin(), st.participants.end(), [&](const auto& p) {
                         return p.id == st.cfg.targets.front();
                       })->keys.sk;

  std::vector<std::pair<chameleon::HashValue, NodeId>> victims;
  for (const auto& p : st.participants) {
    if (targets.contains(p.id)) continue;
    for (auto& k : st.store.keys_owned_by(p.id)) victims.emplace_back(std::move(k), p.id);
  }

  KeyExposureReport rep;
  Rng rng(mix_seed(st.cfg.seed, kTagExposure));
  for (std::size_t i = 0; i < st.cfg.key_exposure_attempts && !victims.empty(); ++i) {
    const auto& [key, owner] = victims[i % victims.size()];
    const auto entry = st.store.get(key);
    const auto pk = *st.store.owner_key(owner);
    std::vector<double> forged(entry.payload.size());
    for (double& v : forged) v = 2.0 * uniform01(rng) - 1.0;
    const auto m_old = chameleon::digest_update(entry.payload, pk.q);
    const auto m_new = chameleon::digest_update(forged, pk.q);
    const auto r_new = chameleon::collision_candidate(pk, leaked, m_old, m_new, entry.randomizer);
    ++rep.attempts;
    if (chameleon::verify(pk, m_new, key, r_new)) ++rep.accepted;
  }
  // The store itself must refuse the foreign trapdoor.
  for (std::size_t i = 0; i < victims.size(); ++i) {
    try {
      st.store.rewrite_entry(victims[i].first, leaked, mix_seed(st.cfg.seed, kTagExposure, i));
      ++rep.store_rewrites;
    } catch (const Error&) {
    }
  }
  rep.chain_ok = !st.chain->verify_chain().has_value();
  const auto keys = st.store.keys();
  rep.store_intact = std::all_of(keys.begin(), keys.end(), [&](const auto& k) { return st.store.entry_verifies(k); });
  return rep;
}

}  // namespace

ScenarioOutcome run_unlearning_scenario(TrainedState& st, const fl::GlobalModel& reference) {
  const auto& cfg = st.cfg;
  ScenarioOutcome out;
  out.kind = cfg.scenario;
  out.reference_eval = fl::evaluate(reference, st.data.test);
  const fl::GlobalModel& trained = st.final_model();
  if (st.members.size() && non_members(st.data).size()) {
    out.mia_before = mia_probe(trained, st.members, non_members(st.data), st.data.mia_calibration);
  }
  out.final_model = trained;

  switch (cfg.scenario) {
    case ScenarioKind::kNoUnlearnBaseline:
      out.records.push_back(make_record(st, "baseline", cfg.rounds, trained, {}, &reference, "n/a"));
      break;

    case ScenarioKind::kRetrainFromScratch: {
      std::vector<fl::GlobalModel> rounds;
      out.final_model = train_reference(cfg, st.data, &rounds);
      for (std::size_t i = 0; i < rounds.size(); ++i) {
        out.records.push_back(
            make_record(st, "reference", std::int64_t(i + 1), rounds[i], {}, &reference, "n/a"));
      }
      break;
    }

    case ScenarioKind::kKeyExposure: {
      out.exposure = key_exposure_attack(st);
      const auto& e = *out.exposure;
      const bool held = e.accepted == 0 && e.store_rewrites == 0 && e.chain_ok && e.store_intact;
      out.exit_code = held ? kExitOk : kExitVerificationFailure;
      break;
    }

    case ScenarioKind::kHonest:
    case ScenarioKind::kTamper: {
      const auto request = submit_request(st);
      const bool measure = cfg.scenario == ScenarioKind::kHonest;
      const double full_ms = measure ? full_retrain_time(st, request) : 0.0;

      unlearning::ServerBehavior behavior;
      if (cfg.scenario == ScenarioKind::kTamper) {
        if (cfg.tamper_mode == TamperMode::kIncludeTarget) behavior.include_target_at_step = cfg.tamper_step;
        else behavior.swap_payload_at_step = cfg.tamper_step;
      }
      const auto start = st.clock->snapshot();
      unlearning::UnlearningContext ctx{*st.chain,
                                        st.store,
                                        st.participants,
                                        st.server_keys,
                                        kServerId,
                                        st.tracker,
                                        st.history.at(request.issued_round),
                                        cfg.rounds,
                                        st.train,
                                        cfg.costs,
                                        st.clock.get(),
                                        behavior,
                                        [&](const unlearning::StepReport& s) {
                                          out.records.push_back(make_record(
                                              st, "unlearn", std::int64_t(s.step), s.model,
                                              SimClock::diff(st.clock->snapshot(), start), &reference,
                                              verification_text(s.verification)));
                                        }};
      out.unlearning = unlearning::run_unlearning(request, ctx, unlearning_options(cfg));
      const auto& u = *out.unlearning;
      out.final_model = u.model;
      out.exit_code = u.completed() ? kExitOk : kExitVerificationFailure;
      if (measure && u.completed()) {
        out.time = make_time_report(cfg, u.plan.t_tilde, u.retrain_time.total(), full_ms);
      }
      break;
    }
  }

  out.final_eval = fl::evaluate(out.final_model, st.data.test);
  out.deviation = fl::l2_distance(out.final_model.weights, reference.weights);
  if (st.members.size() && non_members(st.data).size()) {
    out.mia_after = mia_probe(out.final_model, st.members, non_members(st.data), st.data.mia_calibration);
  }
  out.first_invalid_height = st.chain->verify_chain();
  return out;
}

std::string ScenarioOutcome::summary_json() const {
  ordered_json j;
  j["scenario"] = std::string(to_string(kind));
  j["exit_code"] = exit_code;
  j["accuracy"] = final_eval.accuracy;
  j["loss"] = final_eval.loss;
  j["reference_accuracy"] = reference_eval.accuracy;
  j["deviation"] = deviation;
  j["mia_before"] = {{"precision", mia_before.precision}, {"recall", mia_before.recall}};
  j["mia_after"] = {{"precision", mia_after.precision}, {"recall", mia_after.recall}};
  j["chain_ok"] = !first_invalid_height.has_value();
  if (first_invalid_height) j["first_invalid_height"] = *first_invalid_height;
  if (unlearning) {
    const auto& u = *unlearning;
    j["t_tilde"] = u.plan.t_tilde;
    j["calibrated_epochs"] = u.plan.calibrated_epochs;
    j["steps"] = u.steps.size();
    j["completed"] = u.completed();
    if (u.failed_step) {
      j["failed_step"] = *u.failed_step;
      j["failure_reason"] = std::string(unlearning::to_string(u.failure.reason));
      j["failure_detail"] = u.failure.detail;
    }
    std::size_t ok = 0;
    for (const auto& r : u.rewrites.entries) ok += r.success;
    j["rewrites"] = {{"entries", u.rewrites.entries.size()}, {"succeeded", ok}};
    j["retrain_time_ms"] = u.retrain_time.total();
  }
  if (time) {
    j["time"] = {{"rounds", time->rounds},
                 {"t_tilde", time->t_tilde},
                 {"adaptive_ms", time->adaptive_ms},
                 {"full_ms", time->full_ms},
                 {"measured_reduction_rounds", time->measured_reduction_rounds},
                 {"estimate_rounds", time->estimate_rounds}};
  }
  if (exposure) {
    j["key_exposure"] = {{"attempts", exposure->attempts},
                         {"accepted", exposure->accepted},
                         {"store_rewrites", exposure->store_rewrites},
                         {"chain_ok", exposure->chain_ok},
                         {"store_intact", exposure->store_intact}};
  }
  return j.dump(2) + "\n";
}

ScenarioRun run_scenario(const ExperimentConfig& cfg) {
  validate(cfg);
  const fl::FederatedData data = load_data(cfg);
  fl::GlobalModel reference = train_reference(cfg, data);
  TrainedState st = run_training(cfg, &reference);
  ScenarioOutcome outcome = run_unlearning_scenario(st, reference);
  return {std::move(st), std::move(reference), std::move(outcome)};
}

void write_training(const std::filesystem::path& dir, const TrainedState& st) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  write_file(dir / "config.json", to_json(st.cfg));
  write_file(dir / "ledger.jsonl", st.chain->dump());

  ordered_json keys;
  keys["p"] = to_decimal(st.params.p);
  keys["q"] = to_decimal(st.params.q);
  keys["g"] = to_decimal(st.params.g);
  keys["server_h"] = to_decimal(st.server_keys.pk.h);
  ordered_json secrets;
  secrets["server_x"] = to_decimal(st.server_keys.sk.x);
  keys["clients"] = ordered_json::array();
  secrets["clients"] = ordered_json::array();
  for (const auto& p : st.participants) {
    keys["clients"].push_back({{"id", p.id}, {"h", to_decimal(p.keys.pk.h)}, {"weight", p.data.weight}});
    secrets["clients"].push_back({{"id", p.id}, {"x", to_decimal(p.keys.sk.x)}});
  }
  write_file(dir / "keys.json", keys.dump(2) + "\n");
  // Simulation convenience: each trapdoor would live with its owner only.
  write_file(dir / "secrets.json", secrets.dump(2) + "\n");

  ordered_json tracker;
  tracker["clients"] = ordered_json::array();
  for (NodeId id : st.tracker.clients()) {
    tracker["clients"].push_back({{"id", id}, {"theta", st.tracker.history(id)}});
  }
  write_file(dir / "tracker.json", tracker.dump() + "\n");

  std::filesystem::remove_all(dir / "store", ec);
  st.store.save(dir / "store");
  const auto model = fl::save_checkpoint(st.final_model());
  write_file(dir / "model.bin", std::string(model.begin(), model.end()));
  emit_metrics(st.records, dir / "metrics");
}

void write_outcome(const std::filesystem::path& dir, const TrainedState& st, const ScenarioOutcome& outcome) {
  write_training(dir, st);
  std::vector<MetricsRecord> all = st.records;
  all.insert(all.end(), outcome.records.begin(), outcome.records.end());
  emit_metrics(all, dir / "metrics");
  const auto model = fl::save_checkpoint(outcome.final_model);
  write_file(dir / "model.bin", std::string(model.begin(), model.end()));
  write_file(dir / "outcome.json", outcome.summary_json());
}

TrainedState load_training(const std::filesystem::path& dir) {
  TrainedState st;
  st.cfg = load_config(dir / "config.json");
  st.data = load_data(st.cfg);
  st.members = target_members(st.cfg, st.data);
  st.shape = model_shape(st.cfg, st.data);
  st.train = train_config(st.cfg);

  const PublicKeys pub = read_keys(dir);
  st.params = {pub.server.p, pub.server.q, pub.server.g, bit_length(pub.server.q)};
  const json secrets = parse_json_file(dir / "secrets.json");
  std::map<NodeId, BigInt> xs;
  try {
    st.server_keys = {pub.server, {from_decimal(secrets.at("server_x").get<std::string>())}};
    for (const auto& c : secrets.at("clients")) {
      xs[c.at("id").get<NodeId>()] = from_decimal(c.at("x").get<std::string>());
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("secrets.json: ") + e.what());
  }
  for (const auto& c : st.data.clients) {
    if (!pub.clients.contains(c.client) || !xs.contains(c.client)) {
      fail(ErrorCode::kParse, "no keys for client " + std::to_string(c.client));
    }
    st.participants.push_back({c.client, {pub.clients.at(c.client), {xs.at(c.client)}}, c});
  }

  st.chain.emplace(consensus_stub(st.cfg), ledger::Ledger::parse_dump(read_file(dir / "ledger.jsonl")),
                   st.cfg.costs, st.clock.get());
  if (auto bad = st.chain->verify_chain()) {
    fail(ErrorCode::kInvalidArgument, "stored chain fails verification at height " + std::to_string(*bad));
  }

  std::map<NodeId, chameleon::PublicKey> owners = pub.clients;
  owners[kServerId] = pub.server;
  st.store = offchain::OffchainStore::load(dir / "store", owners);

  const json tracker = parse_json_file(dir / "tracker.json");
  try {
    for (const auto& c : tracker.at("clients")) {
      const auto id = c.at("id").get<NodeId>();
      std::uint64_t t = 0;
      for (double theta : c.at("theta").get<std::vector<double>>()) st.tracker.update(id, theta, ++t);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("tracker.json: ") + e.what());
  }

  for (const auto& [round, commit] : st.chain->state().global_hashes) {
    st.history.push_back({st.shape, st.store.get(commit.value).payload, round});
  }
  if (st.history.size() != st.cfg.rounds + 1) fail(ErrorCode::kParse, "run directory lacks global models");

  if (std::filesystem::exists(dir / "metrics.csv")) {
    for (auto& r : parse_csv(read_file(dir / "metrics.csv"))) {
      if (r.phase == "train") st.records.push_back(std::move(r));
    }
  }
  return st;
}

std::vector<PublicVerification> verify_run(const std::filesystem::path& dir, std::optional<std::uint64_t> round) {
  const ExperimentConfig cfg = load_config(dir / "config.json");
  const PublicKeys pub = read_keys(dir);
  ledger::Ledger chain(consensus_stub(cfg), ledger::Ledger::parse_dump(read_file(dir / "ledger.jsonl")));
  if (auto bad = chain.verify_chain()) {
    fail(ErrorCode::kInvalidArgument, "chain fails verification at height " + std::to_string(*bad));
  }
  std::map<NodeId, chameleon::PublicKey> owners = pub.clients;
  owners[kServerId] = pub.server;
  const auto store = offchain::OffchainStore::load(dir / "store", owners);

  NodeSet targets;
  for (const auto& req : chain.state().pending_requests) targets.insert(req.targets.begin(), req.targets.end());

  std::vector<PublicVerification> out;
  for (const auto& [r, commit] : chain.state().calibration_hashes) {
    if (round && *round != r) continue;
    unlearning::CalibrationCheck check{pub.server,         commit,  chain.query_hashes(r, targets),
                                       pub.weights,        pub.clients.size(), cfg.strict_calibration};
    out.push_back({r, unlearning::verify_calibration(check, store)});
  }
  if (round && out.empty()) fail(ErrorCode::kUnknownRound, "no calibration commit for round " + std::to_string(*round));
  return out;
}

}  // namespace fedunlearn::harness
