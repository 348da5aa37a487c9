#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pedetect/pe_parser.hpp"
#include "pedetect/raw_stats.hpp"

namespace pedetect {

enum class FeatureGroup {
  byte_histogram,
  byte_entropy_histogram,
  strings,
  general,
  header,
  sections,
  imports,
  exports,
  data_directories,
};

struct GroupSlice {
  FeatureGroup group;
  std::string_view name;
  std::size_t offset;
  std::size_t size;
};

// Group order and widths follow the EMBER v2 layout.
inline constexpr std::array<GroupSlice, 9> kGroupLayout = {{
    {FeatureGroup::byte_histogram, "byte_histogram", 0, 256},
    {FeatureGroup::byte_entropy_histogram, "byte_entropy_histogram", 256, 256},
    {FeatureGroup::strings, "strings", 512, 104},
    {FeatureGroup::general, "general", 616, 10},
    {FeatureGroup::header, "header", 626, 62},
    {FeatureGroup::sections, "sections", 688, 255},
    {FeatureGroup::imports, "imports", 943, 1280},
    {FeatureGroup::exports, "exports", 2223, 128},
    {FeatureGroup::data_directories, "data_directories", 2351, 30},
}};

inline constexpr std::size_t kFeatureDim = 2381;

constexpr const GroupSlice& group_slice(FeatureGroup g) {
  return kGroupLayout[static_cast<std::size_t>(g)];
}

/// Fixed-length numeric representation of one file.
class FeatureVector {
 public:
  FeatureVector() : values_(kFeatureDim, 0.0f) {}

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }
  std::span<const float> group(FeatureGroup g) const {
    const auto& s = group_slice(g);
    return std::span<const float>(values_).subspan(s.offset, s.size);
  }
  std::span<float> group(FeatureGroup g) {
    const auto& s = group_slice(g);
    return std::span<float>(values_).subspan(s.offset, s.size);
  }
  std::size_t size() const { return values_.size(); }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<float> values_;
};

/// Full featurization. Total: every byte sequence yields kFeatureDim finite
/// values. When the PE headers cannot be parsed only the raw-byte groups
/// (histograms, strings, file size) are populated.
FeatureVector vectorize(std::span<const std::uint8_t> bytes);

/// Featurization from already computed parts; `pe` may be null.
FeatureVector vectorize(std::span<const std::uint8_t> bytes, const RawStats& raw,
                        const PeSummary* pe);

}  // namespace pedetect
