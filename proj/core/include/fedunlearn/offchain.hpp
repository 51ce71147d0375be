#pragma once

// Off-chain payload store keyed by chameleon hash value.
//
// INVARIANTS
//   1. For every entry: verify(owner pk, digest(payload), key, randomizer).
//   2. An entry's key never changes; a rewrite swaps payload and randomizer.
//   3. A rewrite drops the original payload bytes; nothing keeps a copy.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "fedunlearn/chameleon.hpp"
#include "fedunlearn/ledger.hpp"

namespace fedunlearn::offchain {

using ledger::NodeId;

struct StoredEntry {
  chameleon::HashValue key;
  std::vector<double> payload;
  chameleon::Randomizer randomizer;
  NodeId owner = 0;
  bool rewritten = false;

  friend bool operator==(const StoredEntry&, const StoredEntry&) = default;
};

class OffchainStore {
 public:
  OffchainStore() = default;
  OffchainStore(OffchainStore&&) noexcept = default;
  OffchainStore& operator=(OffchainStore&&) noexcept = default;

  /// Independent deep copy (what-if runs on the same history).
  OffchainStore clone() const;

  /// Stores `payload` under hash(pk, digest(payload), r) and returns that key.
  /// Throws kNonFinite, kDomain (r >= q), or kOverwriteAttempt if the key is taken.
  chameleon::HashValue put(NodeId owner, std::vector<double> payload,
                           const chameleon::PublicKey& pk, const chameleon::Randomizer& r);

  /// Copy of the current entry. Throws kUnknownKey.
  StoredEntry get(const chameleon::HashValue& key) const;
  bool contains(const chameleon::HashValue& key) const;

  /// Replaces the payload by i.i.d. uniform values in [-scale, scale] and the
  /// randomizer by the trapdoor collision. Throws kTrapdoorMismatch and leaves
  /// the entry untouched when `sk` is not the owner's trapdoor.
  chameleon::Randomizer rewrite_entry(const chameleon::HashValue& key,
                                      const chameleon::SecretKey& sk, std::uint64_t seed,
                                      double scale = 1.0);

  /// Swaps the payload without any trapdoor. Models a dishonest storage
  /// operator; the entry stops verifying afterwards.
  void tamper_payload(const chameleon::HashValue& key, std::vector<double> payload);

  std::vector<chameleon::HashValue> keys_owned_by(NodeId owner) const;
  std::vector<chameleon::HashValue> keys() const;
  std::size_t size() const;
  std::optional<chameleon::PublicKey> owner_key(NodeId owner) const;

  /// Re-checks invariant 1 for one entry.
  bool entry_verifies(const chameleon::HashValue& key) const;

  /// Concatenation of every encoded entry, for byte-level erasure scans.
  std::vector<std::uint8_t> raw_bytes() const;

  /// One file per entry, named by the hex of the key.
  void save(const std::filesystem::path& dir) const;
  /// Loads entries written by save(); owner keys must be supplied.
  static OffchainStore load(const std::filesystem::path& dir,
                            const std::map<NodeId, chameleon::PublicKey>& owner_keys);

 private:
  std::map<chameleon::HashValue, StoredEntry> entries_;
  std::map<NodeId, chameleon::PublicKey> owners_;
  std::unique_ptr<std::shared_mutex> mu_ = std::make_unique<std::shared_mutex>();
};

/// Entry envelope: "FUOE" magic, u64 version, then length-prefixed fields
/// (decimal key, canonical payload, decimal randomizer), u64 owner, u8 flag.
std::vector<std::uint8_t> encode_entry(const StoredEntry& entry);
StoredEntry decode_entry(std::span<const std::uint8_t> bytes);

std::string key_hex(const chameleon::HashValue& key);

}  // namespace fedunlearn::offchain
