#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pedetect {

/// Seeds for the two MurmurHash3 passes: one picks the bucket, the top bit of
/// the other picks the sign.
inline constexpr std::uint32_t kHashIndexSeed = 0;
inline constexpr std::uint32_t kHashSignSeed = 0x9747b28c;

struct HashedSlot {
  std::size_t index;
  int sign;  // +1 or -1
};

HashedSlot hash_slot(std::string_view token, std::size_t dim);

/// Adds value * sign(token) at the token's bucket.
void hash_accumulate(std::span<double> out, std::string_view token, double value = 1.0);

std::vector<double> hash_bucket(std::span<const std::string> tokens, std::size_t dim);
std::vector<double> hash_bucket(std::span<const std::pair<std::string, double>> items,
                                std::size_t dim);

}  // namespace pedetect
