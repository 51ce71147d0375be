#include "fedunlearn/offchain.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <iterator>
#include <mutex>

#include "fedunlearn/error.hpp"

namespace fedunlearn::offchain {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'U', 'O', 'E'};
constexpr std::uint64_t kVersion = 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_field(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> bytes) {
  put_u64(out, bytes.size());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

void put_field(std::vector<std::uint8_t>& out, const std::string& s) {
  put_field(out, std::span<const std::uint8_t>(
                     reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::span<const std::uint8_t> field() {
    const std::uint64_t len = u64();
    need(len);
    auto out = bytes_.subspan(pos_, len);
    pos_ += len;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) fail(ErrorCode::kParse, "entry envelope truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string as_string(std::span<const std::uint8_t> bytes) {
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace

std::string key_hex(const chameleon::HashValue& key) {
  return key.v.str(0, std::ios_base::hex);
}

std::vector<std::uint8_t> encode_entry(const StoredEntry& entry) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, kVersion);
  put_field(out, to_decimal(entry.key.v));
  put_field(out, chameleon::serialize_update(entry.payload));
  put_field(out, to_decimal(entry.randomizer.r));
  put_u64(out, entry.owner);
  out.push_back(entry.rewritten ? 1 : 0);
  return out;
}

StoredEntry decode_entry(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    fail(ErrorCode::kParse, "bad entry magic");
  }
  Reader in(bytes.subspan(4));
  if (in.u64() != kVersion) fail(ErrorCode::kParse, "unsupported entry version");
  StoredEntry e;
  e.key.v = from_decimal(as_string(in.field()));
  e.payload = chameleon::deserialize_update(in.field());
  e.randomizer.r = from_decimal(as_string(in.field()));
  const std::uint64_t owner = in.u64();
  if (owner > std::numeric_limits<NodeId>::max()) fail(ErrorCode::kParse, "owner id overflow");
  e.owner = static_cast<NodeId>(owner);
  const std::uint8_t flag = in.u8();
  if (flag > 1) fail(ErrorCode::kParse, "bad rewritten flag");
  e.rewritten = flag == 1;
  if (!in.done()) fail(ErrorCode::kParse, "trailing bytes after entry");
  return e;
}

chameleon::HashValue OffchainStore::put(NodeId owner, std::vector<double> payload,
                                        const chameleon::PublicKey& pk,
                                        const chameleon::Randomizer& r) {
  const auto digest = chameleon::digest_update(payload, pk.q);
  auto key = chameleon::hash(pk, digest, r);

  std::unique_lock lock(*mu_);
  if (auto it = owners_.find(owner); it != owners_.end() && it->second != pk) {
    fail(ErrorCode::kInvalidArgument, "owner already registered with a different key");
  }
  if (entries_.contains(key)) fail(ErrorCode::kOverwriteAttempt, "key already stored");
  owners_.emplace(owner, pk);
  entries_.emplace(key, StoredEntry{key, std::move(payload), r, owner, false});
  return key;
}

OffchainStore OffchainStore::clone() const {
  std::shared_lock lock(*mu_);
  OffchainStore out;
  out.entries_ = entries_;
  out.owners_ = owners_;
  return out;
}

StoredEntry OffchainStore::get(const chameleon::HashValue& key) const {
  std::shared_lock lock(*mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::kUnknownKey, "no entry under key " + key_hex(key));
  return it->second;
}

bool OffchainStore::contains(const chameleon::HashValue& key) const {
  std::shared_lock lock(*mu_);
  return entries_.contains(key);
}

chameleon::Randomizer OffchainStore::rewrite_entry(const chameleon::HashValue& key,
                                                   const chameleon::SecretKey& sk,
                                                   std::uint64_t seed, double scale) {
  if (!(scale > 0.0)) fail(ErrorCode::kInvalidArgument, "replacement scale must be positive");
  std::unique_lock lock(*mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::kUnknownKey, "no entry under key " + key_hex(key));
  StoredEntry& entry = it->second;
  const chameleon::PublicKey& pk = owners_.at(entry.owner);

  Rng rng(mix_seed(seed, 0x52455752ULL));
  std::vector<double> replacement(entry.payload.size());
  for (double& v : replacement) v = (2.0 * uniform01(rng) - 1.0) * scale;

  const auto m_old = chameleon::digest_update(entry.payload, pk.q);
  const auto m_new = chameleon::digest_update(replacement, pk.q);
  // Throws kTrapdoorMismatch before anything is modified.
  auto r_new = chameleon::rewrite(pk, sk, m_old, m_new, entry.randomizer);
  if (!chameleon::verify(pk, m_new, entry.key, r_new)) {
    fail(ErrorCode::kTrapdoorMismatch, "rewrite does not verify under the committed key");
  }

  entry.payload.swap(replacement);
  std::fill(replacement.begin(), replacement.end(), 0.0);  // old bytes
  entry.randomizer = r_new;
  entry.rewritten = true;
  return r_new;
}

void OffchainStore::tamper_payload(const chameleon::HashValue& key, std::vector<double> payload) {
  std::unique_lock lock(*mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::kUnknownKey, "no entry under key " + key_hex(key));
  it->second.payload = std::move(payload);
}

std::vector<chameleon::HashValue> OffchainStore::keys_owned_by(NodeId owner) const {
  std::shared_lock lock(*mu_);
  std::vector<chameleon::HashValue> out;
  for (const auto& [k, e] : entries_) {
    if (e.owner == owner) out.push_back(k);
  }
  return out;
}

std::vector<chameleon::HashValue> OffchainStore::keys() const {
  std::shared_lock lock(*mu_);
  std::vector<chameleon::HashValue> out;
  out.reserve(entries_.size());
  for (const auto& [k, e] : entries_) out.push_back(k);
  return out;
}

std::size_t OffchainStore::size() const {
  std::shared_lock lock(*mu_);
  return entries_.size();
}

std::optional<chameleon::PublicKey> OffchainStore::owner_key(NodeId owner) const {
  std::shared_lock lock(*mu_);
  auto it = owners_.find(owner);
  if (it == owners_.end()) return std::nullopt;
  return it->second;
}

bool OffchainStore::entry_verifies(const chameleon::HashValue& key) const {
  std::shared_lock lock(*mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  const auto& pk = owners_.at(it->second.owner);
  return chameleon::verify(pk, chameleon::digest_update(it->second.payload, pk.q), key,
                           it->second.randomizer);
}

std::vector<std::uint8_t> OffchainStore::raw_bytes() const {
  std::shared_lock lock(*mu_);
  std::vector<std::uint8_t> out;
  for (const auto& [k, e] : entries_) {
    auto bytes = encode_entry(e);
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

void OffchainStore::save(const std::filesystem::path& dir) const {
  std::shared_lock lock(*mu_);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [k, e] : entries_) {
    const auto path = dir / (key_hex(k) + ".entry");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const auto bytes = encode_entry(e);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  }
}

OffchainStore OffchainStore::load(const std::filesystem::path& dir,
                                  const std::map<NodeId, chameleon::PublicKey>& owner_keys) {
  OffchainStore store;
  std::error_code ec;
  for (const auto& item : std::filesystem::directory_iterator(dir, ec)) {
    if (item.path().extension() != ".entry") continue;
    std::ifstream in(item.path(), std::ios::binary);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    StoredEntry e = decode_entry(bytes);
    auto pk = owner_keys.find(e.owner);
    if (pk == owner_keys.end()) {
      fail(ErrorCode::kUnknownClient, "no public key for entry owner " + std::to_string(e.owner));
    }
    store.owners_.emplace(e.owner, pk->second);
    auto key = e.key;
    store.entries_.emplace(std::move(key), std::move(e));
  }
  if (ec) fail(ErrorCode::kIo, "cannot read " + dir.string() + ": " + ec.message());
  return store;
}

}  // namespace fedunlearn::offchain
