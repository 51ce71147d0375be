#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace fedunlearn {

using Hash256 = std::array<std::uint8_t, 32>;

Hash256 sha256(std::span<const std::uint8_t> bytes);
Hash256 sha256(std::string_view bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Throws kParse on odd length or non-hex characters.
Hash256 hash_from_hex(std::string_view hex);

/// Number of leading zero bits, 0..256.
unsigned leading_zero_bits(const Hash256& h);

}  // namespace fedunlearn
