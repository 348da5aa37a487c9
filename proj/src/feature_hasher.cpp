#include "pedetect/feature_hasher.hpp"

#include <algorithm>
#include <cassert>

#include "pedetect/digest.hpp"
#include "pedetect/error.hpp"

namespace pedetect {

HashedSlot hash_slot(std::string_view token, std::size_t dim) {
  assert(dim > 0);
  const std::uint32_t h = murmur3_32(token, kHashIndexSeed);
  const std::uint32_t s = murmur3_32(token, kHashSignSeed);
  return {static_cast<std::size_t>(h % dim), (s & 0x80000000u) ? -1 : 1};
}

void hash_accumulate(std::span<double> out, std::string_view token, double value) {
  const auto slot = hash_slot(token, out.size());
  out[slot.index] += slot.sign * value;
}

std::vector<double> hash_bucket(std::span<const std::string> tokens, std::size_t dim) {
  if (dim == 0) throw ConfigError("hash_bucket: dim must be positive");
  std::vector<double> out(dim, 0.0);
  for (const auto& t : tokens) hash_accumulate(out, t);
  return out;
}

std::vector<double> hash_bucket(std::span<const std::pair<std::string, double>> items,
                                std::size_t dim) {
  if (dim == 0) throw ConfigError("hash_bucket: dim must be positive");
  // Accumulate in a canonical order so permuted inputs give identical bits.
  std::vector<const std::pair<std::string, double>*> order;
  order.reserve(items.size());
  for (const auto& item : items) order.push_back(&item);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return *a < *b; });
  std::vector<double> out(dim, 0.0);
  for (const auto* item : order) hash_accumulate(out, item->first, item->second);
  return out;
}

}  // namespace pedetect
