#include "fedunlearn/chameleon.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "fedunlearn/error.hpp"
#include "fedunlearn/primes.hpp"
#include "fedunlearn/sha256.hpp"

namespace fedunlearn::chameleon {

namespace {

using boost::multiprecision::powm;

constexpr unsigned kProductionLambda = 224;
constexpr unsigned kProductionPBits = 2048;

unsigned default_p_bits(unsigned lambda) {
  if (lambda >= kProductionLambda) return std::max(kProductionPBits, lambda + 64);
  return lambda + std::min(lambda, 64u);
}

// Floor-mod into [0, q); GMP's % truncates toward zero.
BigInt mod_q(const BigInt& v, const BigInt& q) {
  BigInt r = v % q;
  if (r < 0) r += q;
  return r;
}

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[offset + i]} << (8 * i);
  return v;
}

}  // namespace

ChameleonParams setup(unsigned lambda, std::uint64_t seed, SetupOptions opts) {
  if (lambda < 3) fail(ErrorCode::kInvalidArgument, "lambda must be at least 3 bits");
  const unsigned p_bits = opts.p_bits == 0 ? default_p_bits(lambda) : opts.p_bits;
  if (p_bits <= lambda) fail(ErrorCode::kInvalidArgument, "p must be longer than q");

  Rng rng(mix_seed(seed, 0xC4A3E1E0ULL, lambda, p_bits));
  const BigInt p_lo = BigInt(1) << (p_bits - 1);
  const BigInt p_hi = (BigInt(1) << p_bits) - 1;
  // Candidates per q before a fresh q is drawn; ~ln(2^p_bits) covers the prime gap.
  const std::uint64_t per_q = 8ULL * p_bits;

  std::uint64_t attempts = 0;
  while (attempts < opts.max_attempts) {
    BigInt q = primes::random_prime(rng, lambda, opts.max_attempts - attempts);
    ++attempts;

    const BigInt n_lo = (p_lo - 1 + q - 1) / q;  // ceil((p_lo - 1) / q)
    const BigInt n_hi = (p_hi - 1) / q;
    if (n_lo > n_hi) continue;

    for (std::uint64_t i = 0; i < per_q && attempts < opts.max_attempts; ++i, ++attempts) {
      BigInt n = random_between(rng, n_lo, n_hi);
      if ((n & 1) != 0) continue;  // q odd, so n must be even for p odd
      BigInt p = n * q + 1;
      if (!primes::is_probable_prime(p)) continue;

      const BigInt cofactor = (p - 1) / q;
      for (int tries = 0; tries < 64; ++tries) {
        BigInt a = random_between(rng, BigInt(2), p - 2);
        BigInt g = powm(a, cofactor, p);
        if (g != 1) return ChameleonParams{std::move(p), std::move(q), std::move(g), lambda};
      }
    }
  }
  fail(ErrorCode::kGenerationTimeout,
       "no valid (p, q, g) for lambda=" + std::to_string(lambda) + " within budget");
}

bool validate(const ChameleonParams& params) {
  const auto& [p, q, g, lambda] = params;
  if (p < 5 || q < 2) return false;
  if (bit_length(q) != lambda) return false;
  if (!primes::is_probable_prime(q) || !primes::is_probable_prime(p)) return false;
  if ((p - 1) % q != 0) return false;
  if (g <= 1 || g >= p) return false;
  return powm(g, q, p) == 1;
}

PublicKey public_key(const ChameleonParams& params, const BigInt& h) {
  return PublicKey{params.p, params.q, params.g, h};
}

KeyPair generate_keys(const ChameleonParams& params, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6B657967ULL));
  BigInt x = 0;
  while (x == 0) x = random_below(rng, params.q);
  BigInt h = powm(params.g, x, params.p);
  return KeyPair{public_key(params, h), SecretKey{std::move(x)}};
}

HashValue hash(const PublicKey& pk, const Digest& m, const Randomizer& r) {
  if (m.m < 0 || m.m >= pk.q) fail(ErrorCode::kDomain, "message digest outside [0, q)");
  if (r.r < 0 || r.r >= pk.q) fail(ErrorCode::kDomain, "randomizer outside [0, q)");
  const BigInt gm = powm(pk.g, m.m, pk.p);
  const BigInt hr = powm(pk.h, r.r, pk.p);
  BigInt v = gm * hr % pk.p;
  return HashValue{std::move(v)};
}

bool verify(const PublicKey& pk, const Digest& m, const HashValue& value,
            const Randomizer& r) {
  if (m.m < 0 || m.m >= pk.q || r.r < 0 || r.r >= pk.q) return false;
  if (value.v <= 0 || value.v >= pk.p) return false;
  return hash(pk, m, r) == value;
}

Randomizer collision_candidate(const PublicKey& pk, const SecretKey& sk, const Digest& m,
                               const Digest& m_new, const Randomizer& r) {
  if (sk.x <= 0 || sk.x >= pk.q) fail(ErrorCode::kDomain, "trapdoor outside [1, q)");
  const BigInt x_inv = boost::multiprecision::powm(sk.x, pk.q - 2, pk.q);  // q prime
  return Randomizer{mod_q((m.m - m_new.m) * x_inv + r.r, pk.q)};
}

Randomizer rewrite(const PublicKey& pk, const SecretKey& sk, const Digest& m,
                   const Digest& m_new, const Randomizer& r) {
  if (m.m < 0 || m.m >= pk.q || m_new.m < 0 || m_new.m >= pk.q) {
    fail(ErrorCode::kDomain, "message digest outside [0, q)");
  }
  if (r.r < 0 || r.r >= pk.q) fail(ErrorCode::kDomain, "randomizer outside [0, q)");
  if (sk.x <= 0 || sk.x >= pk.q) fail(ErrorCode::kTrapdoorMismatch, "trapdoor outside [1, q)");

  const Randomizer out = collision_candidate(pk, sk, m, m_new, r);

  if (hash(pk, m_new, out) != hash(pk, m, r)) {
    fail(ErrorCode::kTrapdoorMismatch, "trapdoor does not match public key");
  }
  return out;
}

Randomizer random_randomizer(const PublicKey& pk, Rng& rng) {
  return Randomizer{random_below(rng, pk.q)};
}

bool in_subgroup(const PublicKey& pk, const HashValue& value) {
  if (value.v < 1 || value.v >= pk.p) return false;
  return powm(value.v, pk.q, pk.p) == 1;
}

std::vector<std::uint8_t> serialize_update(std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 * values.size());
  put_u64_le(out, values.size());
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "update contains NaN or infinity");
    put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<double> deserialize_update(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) fail(ErrorCode::kParse, "update serialization shorter than prefix");
  const std::uint64_t count = get_u64_le(bytes, 0);
  if (count > (bytes.size() - 8) / 8 || bytes.size() != 8 + 8 * count) {
    fail(ErrorCode::kParse, "update serialization length mismatch");
  }
  std::vector<double> out(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    out[i] = std::bit_cast<double>(get_u64_le(bytes, 8 + 8 * i));
  }
  return out;
}

Digest digest_update(std::span<const double> values, const BigInt& q) {
  const auto bytes = serialize_update(values);
  const Hash256 h = sha256(bytes);
  const BigInt m("0x" + to_hex(h));  // big-endian read
  return Digest{m % q};
}

std::string to_fixture_json(const PublicKey& pk, const std::optional<SecretKey>& sk) {
  nlohmann::ordered_json j;
  j["p"] = to_decimal(pk.p);
  j["q"] = to_decimal(pk.q);
  j["g"] = to_decimal(pk.g);
  j["h"] = to_decimal(pk.h);
  if (sk) j["x"] = to_decimal(sk->x);
  return j.dump();
}

KeyFixture from_fixture_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("key fixture: ") + e.what());
  }
  auto field = [&](const char* name) -> BigInt {
    if (!j.contains(name) || !j[name].is_string()) {
      fail(ErrorCode::kParse, std::string("key fixture missing field ") + name);
    }
    return from_decimal(j[name].get<std::string>());
  };
  KeyFixture out{PublicKey{field("p"), field("q"), field("g"), field("h")}, std::nullopt};
  if (j.contains("x")) out.sk = SecretKey{field("x")};
  return out;
}

}  // namespace fedunlearn::chameleon
