#pragma once

#include <cstdint>

#include "fedunlearn/bigint.hpp"

namespace fedunlearn::primes {

inline constexpr int kDefaultRounds = 64;

// Below this bound the fixed witness set {2,3,...,41} is a proof of primality.
BigInt deterministic_bound();

/// Miller–Rabin. Inputs below deterministic_bound() use the fixed witness
/// set; larger inputs use `rounds` witnesses drawn from a seeded engine.
bool is_probable_prime(const BigInt& n, int rounds = kDefaultRounds,
                       std::uint64_t witness_seed = 0x5eedULL);

/// Uniform random prime with exactly `bits` bits (top bit set).
/// Throws kGenerationTimeout after `max_attempts` candidates.
BigInt random_prime(Rng& rng, unsigned bits, std::uint64_t max_attempts);

}  // namespace fedunlearn::primes
