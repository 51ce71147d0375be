#pragma once

// Simulated permissioned chain: blocks of smart-contract transactions, a
// contract state that is a pure fold over the transaction log, and two
// consensus stubs (validator rotation and a toy hash puzzle) that pick the
// block proposer.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedunlearn/chameleon.hpp"
#include "fedunlearn/error.hpp"
#include "fedunlearn/sha256.hpp"
#include "fedunlearn/timing.hpp"

namespace fedunlearn::ledger {

using NodeId = std::uint32_t;
using NodeSet = std::set<NodeId>;

enum class TxKind {
  kCommitLocalHash,
  kCommitGlobalHash,
  kCommitCalibrationHash,
  kUnlearnRequest,
  kPublicKeyRegistration,
};

std::string_view to_string(TxKind kind);

struct HashCommit {
  chameleon::HashValue value;
  // Published alongside calibration hashes so anyone can re-verify them.
  std::optional<chameleon::Randomizer> randomizer;

  friend bool operator==(const HashCommit&, const HashCommit&) = default;
};

struct UnlearnBody {
  std::vector<NodeId> targets;
  friend bool operator==(const UnlearnBody&, const UnlearnBody&) = default;
};

struct KeyRegistration {
  chameleon::PublicKey pk;
  friend bool operator==(const KeyRegistration&, const KeyRegistration&) = default;
};

using Payload = std::variant<HashCommit, UnlearnBody, KeyRegistration>;

struct Transaction {
  TxKind kind = TxKind::kCommitLocalHash;
  std::uint64_t round = 0;
  NodeId client = 0;
  Payload payload;
  std::uint64_t nonce = 0;

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

struct Block {
  std::uint64_t height = 0;
  Hash256 prev_hash{};
  std::vector<Transaction> txs;
  NodeId proposer = 0;
  std::uint64_t consensus_proof = 0;  // DPoS: rotation index, PoW: nonce
  std::uint64_t work = 0;             // puzzle attempts; timing only, not hashed
  Hash256 hash{};

  friend bool operator==(const Block&, const Block&) = default;
};

/// Recomputes the block hash from its contents (ignores the stored `hash`).
Hash256 compute_block_hash(const Block& block);

struct PendingRequest {
  std::uint64_t round = 0;
  NodeId requester = 0;
  std::vector<NodeId> targets;

  friend bool operator==(const PendingRequest&, const PendingRequest&) = default;
};

struct ContractState {
  std::map<std::pair<std::uint64_t, NodeId>, HashCommit> local_hashes;
  std::map<std::uint64_t, HashCommit> global_hashes;
  std::map<std::uint64_t, HashCommit> calibration_hashes;
  std::vector<PendingRequest> pending_requests;
  std::map<NodeId, chameleon::PublicKey> registered_keys;
  std::map<NodeId, std::uint64_t> last_nonce;

  /// Why `tx` would be rejected against this state, or nullopt if valid.
  std::optional<ErrorCode> check(const Transaction& tx) const;
  /// Applies a transaction; throws the check() error if invalid.
  void apply(const Transaction& tx);

  static ContractState replay(std::span<const Block> blocks);

  friend bool operator==(const ContractState&, const ContractState&) = default;
};

enum class ConsensusKind { kDpos, kPow };

std::string_view to_string(ConsensusKind kind);
ConsensusKind consensus_from_string(std::string_view name);

struct ConsensusStub {
  ConsensusKind kind = ConsensusKind::kDpos;
  std::vector<NodeId> validators{101, 102, 103};
  unsigned difficulty = 8;  // leading zero bits (PoW)
  std::uint64_t seed = 0;
  std::uint64_t max_attempts = 1ULL << 24;

  /// DPoS rotation: validators[height mod |validators|].
  NodeId rotation_proposer(std::uint64_t height) const;
};

struct Receipt {
  bool accepted = false;
  std::uint64_t height = 0;  // block the transaction will land in
  std::optional<ErrorCode> error;
  std::string message;
};

class Ledger {
 public:
  /// Fresh chain with a sealed genesis block.
  explicit Ledger(ConsensusStub stub, CostModel costs = {}, SimClock* clock = nullptr);
  /// Adopts an existing block list (e.g. from a dump) without validating it;
  /// call verify_chain() to check it. State is replayed up to the first
  /// invalid transaction.
  Ledger(ConsensusStub stub, std::vector<Block> chain, CostModel costs = {},
         SimClock* clock = nullptr);

  Ledger(Ledger&&) noexcept = default;
  Ledger& operator=(Ledger&&) noexcept = default;

  /// Validates against sealed state plus already-queued transactions.
  Receipt submit(Transaction tx);

  /// Fills in the next nonce for tx.client and submits.
  Receipt submit_next(TxKind kind, std::uint64_t round, NodeId client, Payload payload);

  /// Seals all queued transactions into a block. Throws kEmptyInput when
  /// nothing is queued and allow_empty is false, kPowTimeout if the puzzle
  /// is not solved within the attempt budget.
  const Block& seal_block(bool allow_empty = false);

  /// Committed local hashes of `round` minus `exclude`.
  /// Throws kUnknownRound if nothing was committed for that round.
  std::map<NodeId, chameleon::HashValue> query_hashes(std::uint64_t round,
                                                      const NodeSet& exclude = {}) const;

  /// nullopt when the whole chain validates, else the first bad height.
  std::optional<std::uint64_t> verify_chain() const;

  const ContractState& state() const { return state_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const ConsensusStub& consensus() const { return stub_; }
  std::size_t pending_count() const;
  std::uint64_t next_nonce(NodeId client) const;

  /// One JSON object per line, one line per block.
  std::string dump() const;
  static std::vector<Block> parse_dump(const std::string& text);

 private:
  Block mine(Block block) const;
  void charge(OpClass c, double ms, std::uint64_t ops = 1);

  ConsensusStub stub_;
  CostModel costs_;
  SimClock* clock_ = nullptr;  // not owned
  std::vector<Block> blocks_;
  ContractState state_;      // sealed blocks only
  ContractState tip_state_;  // sealed + queued
  std::vector<Transaction> pending_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

}  // namespace fedunlearn::ledger
