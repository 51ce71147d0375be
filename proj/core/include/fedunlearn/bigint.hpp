#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <boost/multiprecision/gmp.hpp>

namespace fedunlearn {

using BigInt = boost::multiprecision::mpz_int;

// All protocol randomness flows through this engine so runs replay from a seed.
using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent sub-seeds from one run seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag);
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t a);
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t a,
                       std::uint64_t b);

/// Uniform integer with exactly `bits` random bits (value < 2^bits).
BigInt random_bits(Rng& rng, unsigned bits);

/// Uniform integer in [0, bound). Throws kInvalidArgument on bound <= 0.
BigInt random_below(Rng& rng, const BigInt& bound);

/// Uniform integer in [lo, hi]. Throws kInvalidArgument if lo > hi.
BigInt random_between(Rng& rng, const BigInt& lo, const BigInt& hi);

unsigned bit_length(const BigInt& v);

std::string to_decimal(const BigInt& v);
/// Parses an unsigned decimal string; throws kParse on anything else.
BigInt from_decimal(const std::string& s);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(Rng& rng);

}  // namespace fedunlearn
