#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace pedetect {

inline constexpr std::size_t kEntropyWindow = 2048;
inline constexpr std::size_t kEntropyStep = 1024;
inline constexpr std::size_t kMinStringLength = 5;

struct StringStats {
  std::uint64_t count = 0;
  double average_length = 0.0;
  std::uint64_t printables = 0;  // total characters across all strings
  /// Character counts, indexed by (byte - 0x20). Slot 95 (0x7F) is never
  /// populated since DEL is not printable.
  std::array<std::uint64_t, 96> char_histogram{};
  double entropy = 0.0;  // of the character distribution, bits
  std::uint64_t paths = 0;     // "c:\" case-insensitive
  std::uint64_t urls = 0;      // "http://" or "https://" case-insensitive
  std::uint64_t registry = 0;  // "HKEY_"
  std::uint64_t mz = 0;        // "MZ"
};

struct RawStats {
  std::array<std::uint64_t, 256> byte_histogram{};
  /// 16 entropy bins x 16 high-nibble bins, row-major by entropy bin.
  std::array<std::uint64_t, 256> byte_entropy_histogram{};
  StringStats strings;
};

/// Histograms and string statistics computed from raw bytes alone.
///
/// The byte-entropy grid uses windows of kEntropyWindow bytes advanced by
/// kEntropyStep. Each window's entropy is measured on the 16-bin distribution
/// of high nibbles (probabilities relative to the full window size), doubled
/// to the [0, 8] byte-entropy scale, and quantised into 16 bins; the window's
/// nibble counts are then added to that row. Inputs shorter than one window
/// are treated as a single window. Trailing bytes that do not fill a window
/// are not counted.
RawStats raw_stats(std::span<const std::uint8_t> bytes);

}  // namespace pedetect
