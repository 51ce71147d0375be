#include "fedunlearn/sha256.hpp"

#include <openssl/evp.h>

#include <bit>

#include "fedunlearn/error.hpp"

namespace fedunlearn {

Hash256 sha256(std::span<const std::uint8_t> bytes) {
  Hash256 out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != out.size()) {
    fail(ErrorCode::kIo, "EVP_Digest(sha256) failed");
  }
  return out;
}

Hash256 sha256(std::string_view bytes) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Hash256 hash_from_hex(std::string_view hex) {
  if (hex.size() != 64) fail(ErrorCode::kParse, "expected 64 hex characters");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Hash256 out{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) fail(ErrorCode::kParse, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

unsigned leading_zero_bits(const Hash256& h) {
  unsigned zeros = 0;
  for (std::uint8_t b : h) {
    if (b == 0) {
      zeros += 8;
      continue;
    }
    zeros += static_cast<unsigned>(std::countl_zero(b));
    break;
  }
  return zeros;
}

}  // namespace fedunlearn
