#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace pedetect {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> bytes);
Sha256 sha256(std::string_view text);
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Parses exactly 64 hex digits; throws DataError otherwise.
Sha256 sha256_from_hex(std::string_view hex);

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

/// MurmurHash3 x86_32.
std::uint32_t murmur3_32(std::string_view key, std::uint32_t seed);

/// Incremental SHA-256 for fingerprints built from many pieces.
class Sha256Builder {
 public:
  Sha256Builder();
  ~Sha256Builder();
  Sha256Builder(const Sha256Builder&) = delete;
  Sha256Builder& operator=(const Sha256Builder&) = delete;

  Sha256Builder& update(std::span<const std::uint8_t> bytes);
  Sha256Builder& update(std::string_view text);
  template <typename T>
  Sha256Builder& update_pod(const T& value) {
    return update(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(&value), sizeof(T)));
  }
  std::string hex();

 private:
  void* ctx_;
};

}  // namespace pedetect
