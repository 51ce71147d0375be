#include "fedunlearn/ledger.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "fedunlearn/bigint.hpp"

namespace fedunlearn::ledger {

namespace {

using nlohmann::ordered_json;

constexpr std::pair<TxKind, std::string_view> kKindNames[] = {
    {TxKind::kCommitLocalHash, "commit_local_hash"},
    {TxKind::kCommitGlobalHash, "commit_global_hash"},
    {TxKind::kCommitCalibrationHash, "commit_calibration_hash"},
    {TxKind::kUnlearnRequest, "unlearn_request"},
    {TxKind::kPublicKeyRegistration, "public_key_registration"},
};

TxKind kind_from_string(std::string_view name) {
  for (const auto& [kind, text] : kKindNames) {
    if (text == name) return kind;
  }
  fail(ErrorCode::kParse, "unknown transaction kind: " + std::string(name));
}

bool is_commit(TxKind kind) {
  return kind == TxKind::kCommitLocalHash || kind == TxKind::kCommitGlobalHash ||
         kind == TxKind::kCommitCalibrationHash;
}

ordered_json tx_to_json(const Transaction& tx) {
  ordered_json j;
  j["kind"] = to_string(tx.kind);
  j["round"] = tx.round;
  j["client"] = tx.client;
  j["nonce"] = tx.nonce;
  ordered_json body;
  std::visit(
      [&body](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, HashCommit>) {
          body["hash"] = to_decimal(p.value.v);
          if (p.randomizer) body["randomizer"] = to_decimal(p.randomizer->r);
        } else if constexpr (std::is_same_v<T, UnlearnBody>) {
          body["targets"] = p.targets;
        } else {
          body["p"] = to_decimal(p.pk.p);
          body["q"] = to_decimal(p.pk.q);
          body["g"] = to_decimal(p.pk.g);
          body["h"] = to_decimal(p.pk.h);
        }
      },
      tx.payload);
  j["payload"] = std::move(body);
  return j;
}

BigInt big_field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_string()) {
    fail(ErrorCode::kParse, std::string("missing decimal field ") + name);
  }
  return from_decimal(j[name].get<std::string>());
}

Transaction tx_from_json(const nlohmann::json& j) {
  Transaction tx;
  tx.kind = kind_from_string(j.at("kind").get<std::string>());
  tx.round = j.at("round").get<std::uint64_t>();
  tx.client = j.at("client").get<NodeId>();
  tx.nonce = j.at("nonce").get<std::uint64_t>();
  const auto& body = j.at("payload");
  if (is_commit(tx.kind)) {
    HashCommit c{chameleon::HashValue{big_field(body, "hash")}, std::nullopt};
    if (body.contains("randomizer")) {
      c.randomizer = chameleon::Randomizer{big_field(body, "randomizer")};
    }
    tx.payload = std::move(c);
  } else if (tx.kind == TxKind::kUnlearnRequest) {
    tx.payload = UnlearnBody{body.at("targets").get<std::vector<NodeId>>()};
  } else {
    tx.payload = KeyRegistration{chameleon::PublicKey{
        big_field(body, "p"), big_field(body, "q"), big_field(body, "g"), big_field(body, "h")}};
  }
  return tx;
}

Hash256 tx_root(const std::vector<Transaction>& txs) {
  std::string canonical;
  for (const auto& tx : txs) {
    canonical += tx_to_json(tx).dump();
    canonical += '\n';
  }
  return sha256(canonical);
}

std::string header_bytes(const Block& b, const Hash256& root) {
  std::ostringstream os;
  os << b.height << '|' << to_hex(b.prev_hash) << '|' << to_hex(root) << '|' << b.proposer
     << '|' << b.consensus_proof;
  return os.str();
}

}  // namespace

std::string_view to_string(TxKind kind) {
  for (const auto& [k, text] : kKindNames) {
    if (k == kind) return text;
  }
  return "unknown";
}

std::string_view to_string(ConsensusKind kind) {
  return kind == ConsensusKind::kDpos ? "dpos" : "pow";
}

ConsensusKind consensus_from_string(std::string_view name) {
  if (name == "dpos" || name == "DPoS") return ConsensusKind::kDpos;
  if (name == "pow" || name == "PoW") return ConsensusKind::kPow;
  fail(ErrorCode::kConfig, "unknown consensus kind: " + std::string(name));
}

NodeId ConsensusStub::rotation_proposer(std::uint64_t height) const {
  if (validators.empty()) fail(ErrorCode::kConfig, "consensus stub has no validators");
  return validators[height % validators.size()];
}

Hash256 compute_block_hash(const Block& block) {
  return sha256(header_bytes(block, tx_root(block.txs)));
}

// ---------------------------------------------------------------------------
// Contract state

std::optional<ErrorCode> ContractState::check(const Transaction& tx) const {
  const auto nonce_it = last_nonce.find(tx.client);
  const std::uint64_t last = nonce_it == last_nonce.end() ? 0 : nonce_it->second;
  if (tx.nonce != last + 1) return ErrorCode::kDuplicateNonce;

  switch (tx.kind) {
    case TxKind::kPublicKeyRegistration:
      if (!std::holds_alternative<KeyRegistration>(tx.payload)) return ErrorCode::kInvalidArgument;
      if (registered_keys.contains(tx.client)) return ErrorCode::kOverwriteAttempt;
      return std::nullopt;
    case TxKind::kUnlearnRequest: {
      const auto* body = std::get_if<UnlearnBody>(&tx.payload);
      if (body == nullptr || body->targets.empty()) return ErrorCode::kInvalidArgument;
      return std::nullopt;
    }
    case TxKind::kCommitLocalHash:
    case TxKind::kCommitGlobalHash:
    case TxKind::kCommitCalibrationHash:
      break;
  }

  const auto* commit = std::get_if<HashCommit>(&tx.payload);
  if (commit == nullptr || commit->value.v <= 0) return ErrorCode::kInvalidArgument;
  const auto key_it = registered_keys.find(tx.client);
  if (key_it == registered_keys.end()) return ErrorCode::kUnknownClient;
  if (commit->value.v >= key_it->second.p) return ErrorCode::kInvalidArgument;

  if (tx.kind == TxKind::kCommitLocalHash && local_hashes.contains({tx.round, tx.client})) {
    return ErrorCode::kOverwriteAttempt;
  }
  if (tx.kind == TxKind::kCommitGlobalHash && global_hashes.contains(tx.round)) {
    return ErrorCode::kOverwriteAttempt;
  }
  if (tx.kind == TxKind::kCommitCalibrationHash && calibration_hashes.contains(tx.round)) {
    return ErrorCode::kOverwriteAttempt;
  }
  return std::nullopt;
}

void ContractState::apply(const Transaction& tx) {
  if (auto err = check(tx)) {
    fail(*err, "transaction rejected: " + std::string(fedunlearn::to_string(*err)));
  }
  last_nonce[tx.client] = tx.nonce;
  switch (tx.kind) {
    case TxKind::kPublicKeyRegistration:
      registered_keys.emplace(tx.client, std::get<KeyRegistration>(tx.payload).pk);
      break;
    case TxKind::kUnlearnRequest:
      pending_requests.push_back(
          {tx.round, tx.client, std::get<UnlearnBody>(tx.payload).targets});
      break;
    case TxKind::kCommitLocalHash:
      local_hashes.emplace(std::pair{tx.round, tx.client}, std::get<HashCommit>(tx.payload));
      break;
    case TxKind::kCommitGlobalHash:
      global_hashes.emplace(tx.round, std::get<HashCommit>(tx.payload));
      break;
    case TxKind::kCommitCalibrationHash:
      calibration_hashes.emplace(tx.round, std::get<HashCommit>(tx.payload));
      break;
  }
}

ContractState ContractState::replay(std::span<const Block> blocks) {
  ContractState state;
  for (const auto& block : blocks) {
    for (const auto& tx : block.txs) state.apply(tx);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Ledger

Ledger::Ledger(ConsensusStub stub, CostModel costs, SimClock* clock)
    : stub_(std::move(stub)), costs_(costs), clock_(clock) {
  if (stub_.validators.empty()) fail(ErrorCode::kConfig, "consensus stub has no validators");
  seal_block(/*allow_empty=*/true);
}

Ledger::Ledger(ConsensusStub stub, std::vector<Block> chain, CostModel costs, SimClock* clock)
    : stub_(std::move(stub)), costs_(costs), clock_(clock), blocks_(std::move(chain)) {
  if (stub_.validators.empty()) fail(ErrorCode::kConfig, "consensus stub has no validators");
  // A broken chain still loads; state stops before the first invalid
  // transaction and verify_chain() reports where.
  for (const auto& b : blocks_) {
    ContractState next = state_;
    try {
      for (const auto& tx : b.txs) next.apply(tx);
    } catch (const Error&) {
      break;
    }
    state_ = std::move(next);
  }
  tip_state_ = state_;
}

void Ledger::charge(OpClass c, double ms, std::uint64_t ops) {
  if (clock_ != nullptr) clock_->charge(c, ms, ops);
}

Receipt Ledger::submit(Transaction tx) {
  std::lock_guard lock(*mu_);
  charge(OpClass::kCommit, costs_.contract_latency_ms);
  Receipt receipt;
  receipt.height = blocks_.size();
  if (auto err = tip_state_.check(tx)) {
    receipt.error = err;
    receipt.message = std::string(fedunlearn::to_string(*err));
    return receipt;
  }
  tip_state_.apply(tx);
  pending_.push_back(std::move(tx));
  receipt.accepted = true;
  return receipt;
}

Receipt Ledger::submit_next(TxKind kind, std::uint64_t round, NodeId client, Payload payload) {
  return submit(Transaction{kind, round, client, std::move(payload), next_nonce(client)});
}

std::uint64_t Ledger::next_nonce(NodeId client) const {
  std::lock_guard lock(*mu_);
  auto it = tip_state_.last_nonce.find(client);
  return (it == tip_state_.last_nonce.end() ? 0 : it->second) + 1;
}

std::size_t Ledger::pending_count() const {
  std::lock_guard lock(*mu_);
  return pending_.size();
}

Block Ledger::mine(Block block) const {
  const Hash256 root = tx_root(block.txs);
  if (stub_.kind == ConsensusKind::kDpos) {
    block.consensus_proof = block.height % stub_.validators.size();
    block.proposer = stub_.rotation_proposer(block.height);
    block.work = 1;
    block.hash = sha256(header_bytes(block, root));
    return block;
  }
  // Miners take turns in a fixed order; attempt i belongs to validator i mod n.
  const std::size_t n = stub_.validators.size();
  for (std::uint64_t i = 0; i < stub_.max_attempts; ++i) {
    block.proposer = stub_.validators[i % n];
    block.consensus_proof = mix_seed(stub_.seed, block.height, i);
    Hash256 h = sha256(header_bytes(block, root));
    if (leading_zero_bits(h) >= stub_.difficulty) {
      block.work = i + 1;
      block.hash = h;
      return block;
    }
  }
  fail(ErrorCode::kPowTimeout, "puzzle unsolved at height " + std::to_string(block.height));
}

const Block& Ledger::seal_block(bool allow_empty) {
  std::lock_guard lock(*mu_);
  if (pending_.empty() && !allow_empty) {
    fail(ErrorCode::kEmptyInput, "no pending transactions to seal");
  }
  Block block;
  block.height = blocks_.size();
  if (!blocks_.empty()) block.prev_hash = blocks_.back().hash;
  block.txs = std::move(pending_);
  pending_.clear();

  block = mine(std::move(block));
  if (stub_.kind == ConsensusKind::kDpos) {
    charge(OpClass::kSeal, costs_.dpos_seal_ms);
  } else {
    charge(OpClass::kSeal, costs_.pow_hash_ms * static_cast<double>(block.work));
  }
  blocks_.push_back(std::move(block));
  state_ = tip_state_;
  return blocks_.back();
}

std::map<NodeId, chameleon::HashValue> Ledger::query_hashes(std::uint64_t round,
                                                            const NodeSet& exclude) const {
  std::lock_guard lock(*mu_);
  auto it = state_.local_hashes.lower_bound({round, 0});
  if (it == state_.local_hashes.end() || it->first.first != round) {
    fail(ErrorCode::kUnknownRound, "no local hashes committed for round " + std::to_string(round));
  }
  std::map<NodeId, chameleon::HashValue> out;
  for (; it != state_.local_hashes.end() && it->first.first == round; ++it) {
    if (!exclude.contains(it->first.second)) out.emplace(it->first.second, it->second.value);
  }
  return out;
}

std::optional<std::uint64_t> Ledger::verify_chain() const {
  std::lock_guard lock(*mu_);
  Hash256 prev{};
  ContractState replayed;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    if (b.height != i || b.prev_hash != prev) return i;
    if (compute_block_hash(b) != b.hash) return i;
    for (const auto& tx : b.txs) {
      if (replayed.check(tx)) return i;
      replayed.apply(tx);
    }
    if (stub_.kind == ConsensusKind::kDpos) {
      if (b.consensus_proof != i % stub_.validators.size() ||
          b.proposer != stub_.rotation_proposer(i)) {
        return i;
      }
    } else {
      bool known = false;
      for (NodeId v : stub_.validators) known = known || v == b.proposer;
      if (!known || leading_zero_bits(b.hash) < stub_.difficulty) return i;
    }
    prev = b.hash;
  }
  return std::nullopt;
}

std::string Ledger::dump() const {
  std::lock_guard lock(*mu_);
  std::string out;
  for (const auto& b : blocks_) {
    ordered_json j;
    j["height"] = b.height;
    j["prev_hash"] = to_hex(b.prev_hash);
    j["hash"] = to_hex(b.hash);
    j["proposer"] = b.proposer;
    j["consensus_proof"] = b.consensus_proof;
    j["work"] = b.work;
    ordered_json txs = ordered_json::array();
    for (const auto& tx : b.txs) txs.push_back(tx_to_json(tx));
    j["txs"] = std::move(txs);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Block> Ledger::parse_dump(const std::string& text) {
  std::vector<Block> blocks;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Block b;
      b.height = j.at("height").get<std::uint64_t>();
      b.prev_hash = hash_from_hex(j.at("prev_hash").get<std::string>());
      b.hash = hash_from_hex(j.at("hash").get<std::string>());
      b.proposer = j.at("proposer").get<NodeId>();
      b.consensus_proof = j.at("consensus_proof").get<std::uint64_t>();
      b.work = j.at("work").get<std::uint64_t>();
      for (const auto& tj : j.at("txs")) b.txs.push_back(tx_from_json(tj));
      blocks.push_back(std::move(b));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, "ledger dump line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return blocks;
}

}  // namespace fedunlearn::ledger
