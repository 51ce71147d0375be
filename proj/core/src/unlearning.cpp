#include "fedunlearn/unlearning.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fedunlearn/error.hpp"

namespace fedunlearn::unlearning {

namespace {

constexpr double kRoundTolerance = 1e-9;

double f_of(const ContributionTracker& tracker, NodeId id, double alpha) {
  auto tilde = tracker.theta_tilde(id);
  // A client with no recorded rounds contributed nothing.
  return tilde ? gompertz_contribution(*tilde, alpha) : 0.0;
}

void check_unit_interval(double v, const char* name) {
  if (!(v > 0.0 && v <= 1.0)) fail(ErrorCode::kConfig, std::string(name) + " must be in (0, 1]");
}

}  // namespace

fl::ModelUpdate calibrate_aggregate(std::span<const fl::ModelUpdate> retained,
                                    std::span<const double> weights, std::size_t total_clients,
                                    bool strict) {
  if (retained.empty()) fail(ErrorCode::kEmptyInput, "no retained updates to calibrate");
  if (weights.size() != retained.size()) {
    fail(ErrorCode::kInvalidArgument, "one weight per retained update required");
  }
  if (strict && total_clients < 2) fail(ErrorCode::kInvalidArgument, "K - 1 must be positive");
  const std::size_t dim = retained.front().delta.size();
  double wsum = 0.0;
  for (std::size_t i = 0; i < retained.size(); ++i) {
    if (retained[i].delta.size() != dim) fail(ErrorCode::kDimensionMismatch, "update sizes differ");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      fail(ErrorCode::kInvalidArgument, "weights must be positive and finite");
    }
    wsum += weights[i];
  }
  const double denom = strict ? static_cast<double>(total_clients - 1) * wsum : wsum;

  fl::ModelUpdate out{std::vector<double>(dim, 0.0), 0, retained.front().round};
  for (std::size_t i = 0; i < retained.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) out.delta[d] += weights[i] * retained[i].delta[d];
  }
  for (double& v : out.delta) v /= denom;
  return out;
}

fl::GlobalModel global_calibrate(const fl::GlobalModel& model, const fl::ModelUpdate& calibrated) {
  return fl::apply_update(model, calibrated);
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kNone: return "none";
    case RejectReason::kHashMismatch: return "hash-mismatch";
    case RejectReason::kMissingEntry: return "missing-entry";
  }
  return "unknown";
}

VerifyResult verify_calibration(const CalibrationCheck& check, const offchain::OffchainStore& store) {
  auto reject = [](RejectReason why, std::string detail) {
    return VerifyResult{false, why, std::move(detail)};
  };
  if (!check.committed.randomizer) {
    return reject(RejectReason::kHashMismatch, "calibration commit carries no randomizer");
  }

  std::vector<fl::ModelUpdate> updates;
  std::vector<double> weights;
  for (const auto& [id, key] : check.retained) {
    if (!store.contains(key)) {
      return reject(RejectReason::kMissingEntry, "no stored update for client " + std::to_string(id));
    }
    if (!store.entry_verifies(key)) {
      return reject(RejectReason::kHashMismatch,
                    "stored update of client " + std::to_string(id) + " does not match its commitment");
    }
    auto w = check.weights.find(id);
    if (w == check.weights.end()) {
      fail(ErrorCode::kInvalidArgument, "no public weight for client " + std::to_string(id));
    }
    updates.push_back({store.get(key).payload, id, 0});
    weights.push_back(w->second);
  }

  const auto recomputed = calibrate_aggregate(updates, weights, check.total_clients, check.strict_calibration);
  const auto digest = chameleon::digest_update(recomputed.delta, check.server_pk.q);
  if (!chameleon::verify(check.server_pk, digest, check.committed.value, *check.committed.randomizer)) {
    return reject(RejectReason::kHashMismatch, "recomputed calibration hash differs from the commitment");
  }

  // The published payload itself must also match what was committed.
  if (!store.contains(check.committed.value)) {
    return reject(RejectReason::kMissingEntry, "calibrated update is not in the store");
  }
  if (!store.entry_verifies(check.committed.value)) {
    return reject(RejectReason::kHashMismatch, "stored calibrated update does not match its commitment");
  }
  return {true, RejectReason::kNone, {}};
}

bool RewriteReport::all_succeeded() const {
  return std::all_of(entries.begin(), entries.end(), [](const RewriteRecord& r) { return r.success; });
}

RewriteReport unlearn_rewrite_all(const NodeSet& targets,
                                  const std::map<NodeId, chameleon::SecretKey>& trapdoors,
                                  offchain::OffchainStore& store, const ledger::Ledger& chain,
                                  std::uint64_t seed, double scale) {
  std::map<chameleon::HashValue, std::uint64_t> round_of;
  for (const auto& [rk, commit] : chain.state().local_hashes) {
    if (targets.contains(rk.second)) round_of.emplace(commit.value, rk.first);
  }

  RewriteReport report;
  for (NodeId target : targets) {
    auto sk = trapdoors.find(target);
    std::uint64_t index = 0;
    for (const auto& key : store.keys_owned_by(target)) {
      RewriteRecord rec;
      rec.owner = target;
      rec.key = key;
      if (auto it = round_of.find(key); it != round_of.end()) rec.round = it->second;
      if (sk == trapdoors.end()) {
        rec.error = "no trapdoor for client " + std::to_string(target);
      } else {
        try {
          store.rewrite_entry(key, sk->second, mix_seed(seed, 0x52575254ULL, target, index), scale);
          rec.success = true;
        } catch (const Error& e) {
          rec.error = e.what();
        }
      }
      ++index;
      report.entries.push_back(std::move(rec));
    }
  }
  return report;
}

double compute_theta(std::span<const double> local, std::span<const double> global) {
  if (local.size() != global.size()) fail(ErrorCode::kDimensionMismatch, "theta needs equal sizes");
  double dot = 0.0, nl = 0.0, ng = 0.0;
  for (std::size_t i = 0; i < local.size(); ++i) {
    dot += local[i] * global[i];
    nl += local[i] * local[i];
    ng += global[i] * global[i];
  }
  if (nl == 0.0 || ng == 0.0) return std::numbers::pi / 2.0;
  const double cosine = std::clamp(dot / std::sqrt(nl * ng), -1.0, 1.0);
  return std::acos(cosine);
}

double ContributionTracker::update(NodeId client, double theta, std::uint64_t t) {
  if (!std::isfinite(theta) || theta < 0.0 || theta > std::numbers::pi) {
    fail(ErrorCode::kDomain, "theta must lie in [0, pi]");
  }
  Entry& e = entries_[client];
  if (t != e.t + 1) {
    fail(ErrorCode::kNonConsecutiveRound, "client " + std::to_string(client) + " expected round " +
                                              std::to_string(e.t + 1) + ", got " + std::to_string(t));
  }
  if (t == 1) {
    e.tilde = theta;
  } else {
    const double td = static_cast<double>(t);
    e.tilde = ((td - 1.0) / td) * e.tilde + (1.0 / td) * theta;
  }
  e.t = t;
  e.history.push_back(theta);
  return e.tilde;
}

std::optional<double> ContributionTracker::theta_tilde(NodeId client) const {
  auto it = entries_.find(client);
  if (it == entries_.end() || it->second.t == 0) return std::nullopt;
  return it->second.tilde;
}

std::uint64_t ContributionTracker::last_round(NodeId client) const {
  auto it = entries_.find(client);
  return it == entries_.end() ? 0 : it->second.t;
}

const std::vector<double>& ContributionTracker::history(NodeId client) const {
  static const std::vector<double> kEmpty;
  auto it = entries_.find(client);
  return it == entries_.end() ? kEmpty : it->second.history;
}

std::vector<NodeId> ContributionTracker::clients() const {
  std::vector<NodeId> out;
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

double gompertz_contribution(double theta_tilde, double alpha) {
  if (!(alpha > 0.0)) fail(ErrorCode::kDomain, "alpha must be positive");
  return alpha * (1.0 - std::exp(-alpha * std::exp(theta_tilde - 1.0)));
}

std::optional<double> adaptive_rounds_exact(std::span<const double> target_f,
                                            std::span<const double> retained_f, unsigned total_rounds) {
  double retained = 0.0, target = 0.0;
  for (double f : retained_f) retained += f;
  for (double f : target_f) target += f;
  if (retained_f.empty() || !(retained > 0.0)) return std::nullopt;
  return (1.0 - target / retained) * static_cast<double>(total_rounds);
}

unsigned adaptive_rounds(const NodeSet& targets, const ContributionTracker& tracker,
                         std::span<const NodeId> retained, double alpha, unsigned total_rounds) {
  std::vector<double> tf, rf;
  for (NodeId id : targets) tf.push_back(f_of(tracker, id, alpha));
  for (NodeId id : retained) rf.push_back(f_of(tracker, id, alpha));
  auto exact = adaptive_rounds_exact(tf, rf, total_rounds);
  if (!exact) return total_rounds;
  // Absorb float noise so an exact integer is not bumped up by one.
  const double up = std::ceil(*exact - kRoundTolerance * std::max(1.0, double(total_rounds)));
  return static_cast<unsigned>(std::clamp(up, 0.0, static_cast<double>(total_rounds)));
}

RetrainPlan make_plan(const UnlearnRequest& request, const ContributionTracker& tracker,
                      std::span<const NodeId> retained, const UnlearningOptions& opts,
                      unsigned local_epochs) {
  if (request.targets.empty()) fail(ErrorCode::kInvalidArgument, "unlearning request has no targets");
  if (retained.empty()) fail(ErrorCode::kEmptyInput, "no retained clients");
  if (!(opts.alpha > 0.0)) fail(ErrorCode::kConfig, "alpha must be positive");
  check_unit_interval(opts.delta_t, "delta_t");
  check_unit_interval(opts.calibration_ratio, "calibration_ratio");

  RetrainPlan plan;
  plan.alpha = opts.alpha;
  plan.delta_t = opts.delta_t;
  plan.calibration_ratio = opts.calibration_ratio;
  plan.t_tilde = opts.force_rounds
                     ? std::min(*opts.force_rounds, opts.max_rounds)
                     : adaptive_rounds(request.targets, tracker, retained, opts.alpha, opts.max_rounds);
  const double epochs = std::ceil(opts.calibration_ratio * local_epochs - kRoundTolerance);
  plan.calibrated_epochs = std::max(1u, static_cast<unsigned>(epochs));
  return plan;
}

UnlearningOutcome run_unlearning(const UnlearnRequest& request, UnlearningContext& ctx,
                                 const UnlearningOptions& opts) {
  if (request.targets.empty()) fail(ErrorCode::kInvalidArgument, "unlearning request has no targets");
  const auto& pending = ctx.chain.state().pending_requests;
  const bool on_chain = std::any_of(pending.begin(), pending.end(), [&](const ledger::PendingRequest& p) {
    return NodeSet(p.targets.begin(), p.targets.end()) == request.targets;
  });
  if (!on_chain) fail(ErrorCode::kInvalidArgument, "unlearning request is not committed on-chain");

  std::map<NodeId, const Participant*> by_id;
  for (const auto& p : ctx.clients) by_id.emplace(p.id, &p);
  for (NodeId t : request.targets) {
    if (!by_id.contains(t)) fail(ErrorCode::kUnknownClient, "unknown target " + std::to_string(t));
  }
  std::vector<NodeId> retained;
  std::map<NodeId, double> weights;
  for (const auto& [id, p] : by_id) {
    weights[id] = p->data.weight;
    if (!request.targets.contains(id)) retained.push_back(id);
  }
  const std::size_t total = by_id.size();

  SimClock own_clock;
  SimClock* clock = ctx.clock ? ctx.clock : &own_clock;
  const auto start = clock->snapshot();

  UnlearningOutcome out;
  out.plan = make_plan(request, ctx.tracker, retained, opts, ctx.train.local_epochs);
  out.model = ctx.base_model;
  const std::uint64_t t_u = request.issued_round;

  // A dishonest server's private copy of the targets' round-t_u updates.
  std::vector<std::pair<NodeId, std::vector<double>>> kept;
  if (ctx.behavior.include_target_at_step) {
    for (NodeId t : request.targets) {
      auto it = ctx.chain.state().local_hashes.find({t_u, t});
      if (it != ctx.chain.state().local_hashes.end()) {
        kept.emplace_back(t, ctx.store.get(it->second.value).payload);
      }
    }
  }

  Rng server_rng(mix_seed(opts.seed, 0x5343414CULL));

  auto gather = [&](std::uint64_t ledger_round, std::vector<fl::ModelUpdate>& ups,
                    std::vector<double>& ws, std::size_t step) {
    for (const auto& [id, key] : ctx.chain.query_hashes(ledger_round, request.targets)) {
      ups.push_back({ctx.store.get(key).payload, id, ledger_round});
      ws.push_back(weights.at(id));
    }
    if (ctx.behavior.include_target_at_step == step) {
      for (const auto& [id, payload] : kept) {
        ups.push_back({payload, id, ledger_round});
        ws.push_back(weights.at(id));
      }
    }
  };

  // Server aggregation, commitment and every target's verification.
  auto calibrate_step = [&](std::size_t step, std::uint64_t ledger_round) -> bool {
    std::vector<fl::ModelUpdate> ups;
    std::vector<double> ws;
    gather(ledger_round, ups, ws, step);
    const auto agg = calibrate_aggregate(ups, ws, total, opts.strict_calibration);
    clock->charge(OpClass::kAggregate, ctx.costs.aggregate_ms_per_update * double(ups.size()),
                  ups.size());
    out.model = global_calibrate(out.model, agg);

    const auto& spk = ctx.server_keys.pk;
    const auto r = chameleon::random_randomizer(spk, server_rng);
    const auto key = ctx.store.put(ctx.server_id, agg.delta, spk, r);
    if (ctx.behavior.swap_payload_at_step == step) {
      auto swapped = agg.delta;
      for (double& v : swapped) v += 1e-3;
      ctx.store.tamper_payload(key, std::move(swapped));
    }
    auto receipt = ctx.chain.submit_next(ledger::TxKind::kCommitCalibrationHash, ledger_round,
                                         ctx.server_id, ledger::HashCommit{key, r});
    if (!receipt.accepted) fail(receipt.error.value_or(ErrorCode::kInvalidArgument), receipt.message);
    ctx.chain.seal_block();

    CalibrationCheck check{spk, ctx.chain.state().calibration_hashes.at(ledger_round),
                           ctx.chain.query_hashes(ledger_round, request.targets), weights, total,
                           opts.strict_calibration};
    StepReport rep{step, ledger_round, out.model, {}};
    rep.verification.accepted = true;
    for (std::size_t i = 0; i < request.targets.size(); ++i) {
      auto res = verify_calibration(check, ctx.store);
      clock->charge(OpClass::kVerify, ctx.costs.verify_ms * double(check.retained.size() + 2),
                    check.retained.size() + 2);
      if (!res.accepted) rep.verification = std::move(res);
    }
    const bool ok = rep.verification.accepted;
    if (ctx.on_step) ctx.on_step(rep);
    if (!ok) {
      out.failed_step = step;
      out.failure = rep.verification;
    }
    out.steps.push_back(std::move(rep));
    return ok;
  };

  auto finish = [&] {
    out.retrain_time = SimClock::diff(clock->snapshot(), start);
    const auto lr = static_cast<std::size_t>(OpClass::kRewrite);
    out.retrain_time.time[lr] = 0.0;
    out.retrain_time.count[lr] = 0;
    return out;
  };

  // Step 0: calibrate from the stored round-t_u updates of retained clients.
  if (!calibrate_step(0, t_u)) return finish();

  {
    std::map<NodeId, chameleon::SecretKey> trapdoors;
    for (NodeId t : request.targets) trapdoors.emplace(t, by_id.at(t)->keys.sk);
    out.rewrites = unlearn_rewrite_all(request.targets, trapdoors, ctx.store, ctx.chain,
                                       mix_seed(opts.seed, 0x52455752ULL), opts.rewrite_scale);
    clock->charge(OpClass::kRewrite, ctx.costs.rewrite_ms * double(out.rewrites.entries.size()),
                  out.rewrites.entries.size());
  }

  fl::TrainConfig cal = ctx.train;
  cal.local_epochs = out.plan.calibrated_epochs;
  for (unsigned j = 1; j <= out.plan.t_tilde; ++j) {
    const std::uint64_t ledger_round = ctx.first_free_round + j - 1;
    // Retained clients recompute their updates on the calibrated trajectory.
    for (NodeId id : retained) {
      const Participant& p = *by_id.at(id);
      auto u = fl::local_train(out.model, p.data, cal);
      for (double& v : u.delta) v *= out.plan.delta_t;
      clock->charge(OpClass::kTrain,
                    ctx.costs.train_ms_per_sample_epoch * double(p.data.data.size()) * cal.local_epochs,
                    1);
      Rng crng(mix_seed(opts.seed, 0x43434C49ULL, id, ledger_round));
      const auto r = chameleon::random_randomizer(p.keys.pk, crng);
      const auto key = ctx.store.put(id, std::move(u.delta), p.keys.pk, r);
      auto receipt = ctx.chain.submit_next(ledger::TxKind::kCommitLocalHash, ledger_round, id,
                                           ledger::HashCommit{key, std::nullopt});
      if (!receipt.accepted) fail(receipt.error.value_or(ErrorCode::kInvalidArgument), receipt.message);
    }
    ctx.chain.seal_block();
    if (!calibrate_step(j, ledger_round)) return finish();
  }
  return finish();
}

}  // namespace fedunlearn::unlearning
