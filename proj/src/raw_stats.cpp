#include "pedetect/raw_stats.hpp"

#include <algorithm>
#include <cmath>
#include <string_view>

namespace pedetect {

namespace {

void add_window(std::span<const std::uint8_t> window, RawStats& out) {
  std::array<std::uint64_t, 16> nibbles{};
  for (auto b : window) ++nibbles[b >> 4];
  double h = 0.0;
  for (auto c : nibbles) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(kEntropyWindow);
    h -= p * std::log2(p);
  }
  // 16 nibble bins carry at most 4 bits; double it onto the byte scale.
  h *= 2.0;
  const auto bin = std::min<std::size_t>(static_cast<std::size_t>(h * 2.0), 15);
  for (std::size_t j = 0; j < 16; ++j) out.byte_entropy_histogram[bin * 16 + j] += nibbles[j];
}

bool printable(std::uint8_t c) { return c >= 0x20 && c <= 0x7E; }

std::uint8_t lower(std::uint8_t c) { return (c >= 'A' && c <= 'Z') ? c + ('a' - 'A') : c; }

/// Non-overlapping occurrences, scanning left to right.
std::uint64_t count_occurrences(std::span<const std::uint8_t> bytes, std::string_view needle,
                                bool ignore_case) {
  std::uint64_t n = 0;
  const std::size_t m = needle.size();
  std::size_t i = 0;
  while (i + m <= bytes.size()) {
    bool hit = true;
    for (std::size_t k = 0; k < m; ++k) {
      auto a = bytes[i + k];
      auto b = static_cast<std::uint8_t>(needle[k]);
      if (ignore_case) {
        a = lower(a);
        b = lower(b);
      }
      if (a != b) {
        hit = false;
        break;
      }
    }
    if (hit) {
      ++n;
      i += m;
    } else {
      ++i;
    }
  }
  return n;
}

/// Counts "http://" and "https://" without double counting.
std::uint64_t count_urls(std::span<const std::uint8_t> bytes) {
  std::uint64_t n = 0;
  std::size_t i = 0;
  constexpr std::string_view kHttp = "http";
  while (i + 7 <= bytes.size()) {
    bool prefix = true;
    for (std::size_t k = 0; k < 4; ++k) {
      if (lower(bytes[i + k]) != static_cast<std::uint8_t>(kHttp[k])) {
        prefix = false;
        break;
      }
    }
    if (prefix) {
      std::size_t j = i + 4;
      if (lower(bytes[j]) == 's') ++j;
      if (j + 3 <= bytes.size() && bytes[j] == ':' && bytes[j + 1] == '/' && bytes[j + 2] == '/') {
        ++n;
        i = j + 3;
        continue;
      }
    }
    ++i;
  }
  return n;
}

StringStats string_stats(std::span<const std::uint8_t> bytes) {
  StringStats s;
  std::uint64_t total_length = 0;
  std::size_t i = 0;
  while (i < bytes.size()) {
    if (!printable(bytes[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < bytes.size() && printable(bytes[j])) ++j;
    const std::size_t len = j - i;
    if (len >= kMinStringLength) {
      ++s.count;
      total_length += len;
      for (std::size_t k = i; k < j; ++k) ++s.char_histogram[bytes[k] - 0x20];
    }
    i = j;
  }
  s.printables = total_length;
  if (s.count > 0) {
    s.average_length = static_cast<double>(total_length) / static_cast<double>(s.count);
    for (auto c : s.char_histogram) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / static_cast<double>(total_length);
      s.entropy -= p * std::log2(p);
    }
  }
  s.paths = count_occurrences(bytes, "c:\\", true);
  s.urls = count_urls(bytes);
  s.registry = count_occurrences(bytes, "HKEY_", false);
  s.mz = count_occurrences(bytes, "MZ", false);
  return s;
}

}  // namespace

RawStats raw_stats(std::span<const std::uint8_t> bytes) {
  RawStats out;
  for (auto b : bytes) ++out.byte_histogram[b];

  if (!bytes.empty()) {
    if (bytes.size() < kEntropyWindow) {
      add_window(bytes, out);
    } else {
      for (std::size_t start = 0; start + kEntropyWindow <= bytes.size(); start += kEntropyStep) {
        add_window(bytes.subspan(start, kEntropyWindow), out);
      }
    }
  }

  out.strings = string_stats(bytes);
  return out;
}

}  // namespace pedetect
