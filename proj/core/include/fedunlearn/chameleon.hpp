#pragma once

// Discrete-log chameleon hash over the order-q subgroup of Z_p^*.
//
//   hash(m, r)   = g^m * h^r mod p,        h = g^x mod p
//   rewrite      = r' = (m - m') * x^-1 + r mod q
//
// Exponents live mod q. Anyone holding pk can hash and verify; only the
// holder of x can produce a second preimage under the same hash value.

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedunlearn/bigint.hpp"

namespace fedunlearn::chameleon {

struct ChameleonParams {
  BigInt p;
  BigInt q;
  BigInt g;
  unsigned lambda = 0;  // bit length of q

  friend bool operator==(const ChameleonParams&, const ChameleonParams&) = default;
};

struct PublicKey {
  BigInt p;
  BigInt q;
  BigInt g;
  BigInt h;

  friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

struct SecretKey {
  BigInt x;

  friend bool operator==(const SecretKey&, const SecretKey&) = default;
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

/// Message representative in [0, q).
struct Digest {
  BigInt m;
  friend bool operator==(const Digest&, const Digest&) = default;
};

/// Public blinding exponent in [0, q).
struct Randomizer {
  BigInt r;
  friend bool operator==(const Randomizer&, const Randomizer&) = default;
};

/// Group element of the order-q subgroup.
struct HashValue {
  BigInt v;
  friend bool operator==(const HashValue&, const HashValue&) = default;
  friend std::strong_ordering operator<=>(const HashValue& a, const HashValue& b) {
    return a.v.compare(b.v) <=> 0;
  }
};

struct SetupOptions {
  // 0 picks the profile default: lambda + min(lambda, 64) bits below 224,
  // 2048 bits from 224 up.
  unsigned p_bits = 0;
  std::uint64_t max_attempts = 1'000'000;
};

/// Generates (p, q, g) with |q| = lambda bits and p = n*q + 1.
/// Throws kGenerationTimeout when the attempt budget runs out and
/// kInvalidArgument for lambda < 3 or p_bits <= lambda.
ChameleonParams setup(unsigned lambda, std::uint64_t seed, SetupOptions opts = {});

/// Checks every ChameleonParams invariant (primality, q | p-1, order of g).
bool validate(const ChameleonParams& params);

PublicKey public_key(const ChameleonParams& params, const BigInt& h);

/// x uniform in [1, q-1]; a zero draw is discarded and redrawn.
KeyPair generate_keys(const ChameleonParams& params, std::uint64_t seed);

/// Throws kDomain if m or r is outside [0, q).
HashValue hash(const PublicKey& pk, const Digest& m, const Randomizer& r);

/// Malformed inputs (out-of-range m, r, or H) reject instead of throwing.
bool verify(const PublicKey& pk, const Digest& m, const HashValue& value,
            const Randomizer& r);

/// Trapdoor collision: returns r' with hash(pk, m_new, r') == hash(pk, m, r).
/// Throws kTrapdoorMismatch when sk does not belong to pk (the collision
/// fails its own verification) and kDomain for out-of-range inputs.
Randomizer rewrite(const PublicKey& pk, const SecretKey& sk, const Digest& m,
                   const Digest& m_new, const Randomizer& r);

/// The rewrite formula without the post-check. With a trapdoor that does
/// not belong to pk the result is just a candidate that fails verify().
Randomizer collision_candidate(const PublicKey& pk, const SecretKey& sk, const Digest& m,
                               const Digest& m_new, const Randomizer& r);

/// Uniform randomizer in [0, q).
Randomizer random_randomizer(const PublicKey& pk, Rng& rng);

/// v^q mod p == 1 and 1 <= v < p.
bool in_subgroup(const PublicKey& pk, const HashValue& value);

/// Length-prefixed little-endian IEEE-754 binary64 serialization:
/// u64 count, then count doubles. Throws kNonFinite on NaN/inf.
std::vector<std::uint8_t> serialize_update(std::span<const double> values);

/// Inverse of serialize_update; throws kParse on malformed input.
std::vector<double> deserialize_update(std::span<const std::uint8_t> bytes);

/// SHA-256 of serialize_update(values), read big-endian, reduced mod q.
Digest digest_update(std::span<const double> values, const BigInt& q);

// Fixture records: decimal big-integer strings, x optional.
struct KeyFixture {
  PublicKey pk;
  std::optional<SecretKey> sk;
};

std::string to_fixture_json(const PublicKey& pk,
                            const std::optional<SecretKey>& sk = std::nullopt);
KeyFixture from_fixture_json(const std::string& text);

}  // namespace fedunlearn::chameleon
