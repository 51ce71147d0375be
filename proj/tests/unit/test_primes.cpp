#include <gtest/gtest.h>

#include <boost/multiprecision/miller_rabin.hpp>

#include "fedunlearn/bigint.hpp"
#include "fedunlearn/error.hpp"
#include "fedunlearn/primes.hpp"

using namespace fedunlearn;

TEST(Primes, SmallValuesMatchTrialDivision) {
  auto trial = [](unsigned n) {
    if (n < 2) return false;
    for (unsigned d = 2; d * d <= n; ++d)
      if (n % d == 0) return false;
    return true;
  };
  for (unsigned n = 0; n < 5000; ++n) EXPECT_EQ(primes::is_probable_prime(BigInt(n)), trial(n)) << n;
}

TEST(Primes, CarmichaelAndStrongPseudoprimesRejected) {
  for (unsigned n : {561u, 1105u, 1729u, 2465u, 2047u, 3215031751u}) {
    EXPECT_FALSE(primes::is_probable_prime(BigInt(n))) << n;
  }
}

TEST(Primes, AgreesWithBoostOnRandomLargeOddNumbers) {
  Rng rng(42);
  std::mt19937 oracle_rng(7);
  int primes_seen = 0;
  for (int i = 0; i < 400; ++i) {
    BigInt n = BigInt(random_bits(rng, 160) | 1);
    const bool expected = boost::multiprecision::miller_rabin_test(n, 40, oracle_rng);
    EXPECT_EQ(primes::is_probable_prime(n), expected);
    primes_seen += expected;
  }
  EXPECT_GT(primes_seen, 0);
}

TEST(Primes, KnownLargePrimes) {
  EXPECT_TRUE(primes::is_probable_prime(BigInt("18446744073709551557")));
  // 2^127 - 1
  EXPECT_TRUE(primes::is_probable_prime(BigInt((BigInt(1) << 127) - 1)));
  EXPECT_FALSE(primes::is_probable_prime(BigInt((BigInt(1) << 128) + 1)));
}

TEST(Primes, RandomPrimeHasExactBitLength) {
  Rng rng(3);
  std::mt19937 oracle_rng(11);
  for (unsigned bits : {8u, 31u, 64u, 128u}) {
    const BigInt p = primes::random_prime(rng, bits, 100000);
    EXPECT_EQ(bit_length(p), bits);
    EXPECT_TRUE(boost::multiprecision::miller_rabin_test(p, 40, oracle_rng));
  }
}

TEST(Primes, RandomPrimeTimesOut) {
  Rng rng(3);
  try {
    primes::random_prime(rng, 256, 1);
    // One candidate may be prime by luck; that is still a valid outcome.
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGenerationTimeout);
  }
}

TEST(BigIntHelpers, DecimalRoundTripAndErrors) {
  const BigInt v("123456789012345678901234567890");
  EXPECT_EQ(from_decimal(to_decimal(v)), v);
  EXPECT_THROW(from_decimal("12a"), Error);
  EXPECT_THROW(from_decimal(""), Error);
  EXPECT_THROW(from_decimal("-5"), Error);
}

TEST(BigIntHelpers, RandomBelowStaysInRange) {
  Rng rng(9);
  const BigInt bound(1000);
  for (int i = 0; i < 1000; ++i) {
    const BigInt v = random_below(rng, bound);
    EXPECT_GE(v, 0);
    EXPECT_LT(v, bound);
  }
  EXPECT_THROW(random_below(rng, BigInt(0)), Error);
  EXPECT_THROW(random_between(rng, BigInt(5), BigInt(4)), Error);
}

TEST(BigIntHelpers, MixSeedSeparatesTags) {
  EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
  EXPECT_NE(mix_seed(1, 2, 0), mix_seed(1, 2, 1));
  EXPECT_EQ(mix_seed(5, 6, 7, 8), mix_seed(5, 6, 7, 8));
}
