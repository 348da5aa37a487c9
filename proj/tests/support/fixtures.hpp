#pragma once

#include <string>

#include "pedetect/dataset.hpp"
#include "pedetect/rng.hpp"

namespace pedetect::testing {

/// Two classes drawn from unit Gaussians centred at -shift and +shift.
inline DatasetStore gaussian_store(std::size_t n, std::size_t d, std::uint64_t seed, double shift = 0.5,
                                   const std::string& tag = "g") {
  Rng rng(seed);
  DatasetStore s;
  std::vector<float> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::int8_t>(rng.index(2));
    for (auto& v : row) v = static_cast<float>(rng.normal() + (y == 1 ? shift : -shift));
    s.append(row, y, sha256(tag + "/" + std::to_string(seed) + "/" + std::to_string(i)), tag);
  }
  return s;
}

}  // namespace pedetect::testing
