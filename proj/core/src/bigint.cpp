#include "fedunlearn/bigint.hpp"

#include <cctype>

#include "fedunlearn/error.hpp"

namespace fedunlearn {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
  return splitmix64(splitmix64(base) ^ tag);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t a) {
  return splitmix64(mix_seed(base, tag) ^ a);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t a,
                       std::uint64_t b) {
  return splitmix64(mix_seed(base, tag, a) ^ b);
}

BigInt random_bits(Rng& rng, unsigned bits) {
  BigInt out = 0;
  unsigned remaining = bits;
  while (remaining >= 64) {
    out <<= 64;
    out |= BigInt(rng());
    remaining -= 64;
  }
  if (remaining > 0) {
    out <<= remaining;
    out |= BigInt(rng() >> (64 - remaining));
  }
  return out;
}

BigInt random_below(Rng& rng, const BigInt& bound) {
  if (bound <= 0) fail(ErrorCode::kInvalidArgument, "random_below: bound must be positive");
  if (bound == 1) return 0;
  const unsigned bits = bit_length(bound - 1);
  // Rejection sampling keeps the draw exactly uniform.
  for (;;) {
    BigInt candidate = random_bits(rng, bits);
    if (candidate < bound) return candidate;
  }
}

BigInt random_between(Rng& rng, const BigInt& lo, const BigInt& hi) {
  if (lo > hi) fail(ErrorCode::kInvalidArgument, "random_between: empty range");
  return lo + random_below(rng, hi - lo + 1);
}

unsigned bit_length(const BigInt& v) {
  if (v <= 0) return 0;
  return static_cast<unsigned>(boost::multiprecision::msb(v)) + 1;
}

std::string to_decimal(const BigInt& v) { return v.str(); }

BigInt from_decimal(const std::string& s) {
  if (s.empty()) fail(ErrorCode::kParse, "empty decimal integer");
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      fail(ErrorCode::kParse, "not a decimal integer: " + s);
    }
  }
  return BigInt(s);
}

double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace fedunlearn
