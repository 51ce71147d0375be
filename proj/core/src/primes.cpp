#include "fedunlearn/primes.hpp"

#include <array>
#include <vector>

#include "fedunlearn/error.hpp"

namespace fedunlearn::primes {

namespace {

constexpr std::array<unsigned, 13> kFixedWitnesses = {2,  3,  5,  7,  11, 13, 17,
                                                      19, 23, 29, 31, 37, 41};

const std::vector<unsigned>& small_primes() {
  static const std::vector<unsigned> table = [] {
    constexpr unsigned kLimit = 2000;
    std::vector<bool> composite(kLimit + 1, false);
    std::vector<unsigned> out;
    for (unsigned i = 2; i <= kLimit; ++i) {
      if (composite[i]) continue;
      out.push_back(i);
      for (unsigned j = i * i; j <= kLimit; j += i) composite[j] = true;
    }
    return out;
  }();
  return table;
}

// One Miller–Rabin round; true means "probably prime" for this witness.
bool passes_round(const BigInt& n, const BigInt& n_minus_1, const BigInt& d,
                  unsigned s, const BigInt& a) {
  BigInt y = boost::multiprecision::powm(a, d, n);
  if (y == 1 || y == n_minus_1) return true;
  for (unsigned i = 1; i < s; ++i) {
    y = (y * y) % n;
    if (y == n_minus_1) return true;
    if (y == 1) return false;
  }
  return false;
}

}  // namespace

BigInt deterministic_bound() {
  // Sorenson & Webster: the first 13 prime bases are exact below this value.
  static const BigInt bound("3317044064679887385961981");
  return bound;
}

bool is_probable_prime(const BigInt& n, int rounds, std::uint64_t witness_seed) {
  if (n < 2) return false;
  for (unsigned p : small_primes()) {
    if (n == p) return true;
    if (n % p == 0) return false;
  }

  const BigInt n_minus_1 = n - 1;
  BigInt d = n_minus_1;
  unsigned s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }

  if (n < deterministic_bound()) {
    for (unsigned a : kFixedWitnesses) {
      if (!passes_round(n, n_minus_1, d, s, BigInt(a))) return false;
    }
    return true;
  }

  Rng rng(mix_seed(witness_seed, bit_length(n)));
  const BigInt hi = n - 2;
  for (int i = 0; i < rounds; ++i) {
    const BigInt a = random_between(rng, BigInt(2), hi);
    if (!passes_round(n, n_minus_1, d, s, a)) return false;
  }
  return true;
}

BigInt random_prime(Rng& rng, unsigned bits, std::uint64_t max_attempts) {
  if (bits < 2) fail(ErrorCode::kInvalidArgument, "random_prime: need at least 2 bits");
  const BigInt top = BigInt(1) << (bits - 1);
  for (std::uint64_t attempt = 0; attempt < max_attempts; ++attempt) {
    BigInt candidate = random_bits(rng, bits) | top | 1;
    if (is_probable_prime(candidate)) return candidate;
  }
  fail(ErrorCode::kGenerationTimeout,
       "no " + std::to_string(bits) + "-bit prime within attempt budget");
}

}  // namespace fedunlearn::primes
