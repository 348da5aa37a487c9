#include "pedetect/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "pedetect/feature_hasher.hpp"

namespace pedetect {

namespace {

constexpr std::size_t kHeaderHashDim = 10;
constexpr std::size_t kSectionHashDim = 50;
constexpr std::size_t kLibraryHashDim = 256;
constexpr std::size_t kFunctionHashDim = 1024;
constexpr std::size_t kDataDirectoriesUsed = 15;

std::string to_lower(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

/// Sequential writer over one group's slice.
class SliceWriter {
 public:
  explicit SliceWriter(std::span<float> out) : out_(out) {}

  void put(double v) { out_[pos_++] = static_cast<float>(v); }

  template <typename Range>
  void put_all(const Range& values) {
    for (auto v : values) put(static_cast<double>(v));
  }

  /// Hashes tokens into the next `dim` slots.
  void put_hashed(std::span<const std::string> tokens, std::size_t dim) {
    put_all(hash_bucket(tokens, dim));
  }

  void put_hashed(std::span<const std::pair<std::string, double>> items, std::size_t dim) {
    put_all(hash_bucket(items, dim));
  }

  std::size_t written() const { return pos_; }

 private:
  std::span<float> out_;
  std::size_t pos_ = 0;
};

template <std::size_t N>
void put_normalized(SliceWriter& w, const std::array<std::uint64_t, N>& counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  for (auto c : counts) {
    w.put(total == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(total));
  }
}

void write_strings(SliceWriter& w, const StringStats& s) {
  w.put(static_cast<double>(s.count));
  w.put(s.average_length);
  w.put(static_cast<double>(s.printables));
  const double divisor = s.printables == 0 ? 1.0 : static_cast<double>(s.printables);
  for (auto c : s.char_histogram) w.put(static_cast<double>(c) / divisor);
  w.put(s.entropy);
  w.put(static_cast<double>(s.paths));
  w.put(static_cast<double>(s.urls));
  w.put(static_cast<double>(s.registry));
  w.put(static_cast<double>(s.mz));
}

void write_general(SliceWriter& w, std::size_t file_size, const PeSummary* pe) {
  w.put(static_cast<double>(file_size));
  if (pe == nullptr) {
    for (int i = 0; i < 9; ++i) w.put(0.0);
    return;
  }
  const auto has_dir = [&](std::size_t i) { return pe->data_directories[i].size > 0 ? 1.0 : 0.0; };
  w.put(pe->sizeof_image);
  w.put(has_dir(6));  // debug
  w.put(static_cast<double>(pe->exports.size()));
  w.put(static_cast<double>(pe->imports.size()));
  w.put(has_dir(5));  // base relocations
  w.put(has_dir(2));  // resources
  w.put(has_dir(4));  // certificate table
  w.put(has_dir(9));  // TLS
  w.put(pe->number_of_symbols);
}

void write_header(SliceWriter& w, const PeSummary& pe) {
  w.put(pe.timestamp);
  const std::string machine[] = {machine_name(pe.machine)};
  w.put_hashed(machine, kHeaderHashDim);
  w.put_hashed(coff_characteristic_names(pe.characteristics), kHeaderHashDim);
  const std::string subsystem[] = {subsystem_name(pe.subsystem)};
  w.put_hashed(subsystem, kHeaderHashDim);
  w.put_hashed(dll_characteristic_names(pe.dll_characteristics), kHeaderHashDim);
  const std::string magic[] = {magic_name(pe.magic)};
  w.put_hashed(magic, kHeaderHashDim);
  w.put(pe.major_image_version);
  w.put(pe.minor_image_version);
  w.put(pe.major_linker_version);
  w.put(pe.minor_linker_version);
  w.put(pe.major_os_version);
  w.put(pe.minor_os_version);
  w.put(pe.major_subsystem_version);
  w.put(pe.minor_subsystem_version);
  w.put(pe.sizeof_code);
  w.put(pe.sizeof_headers);
  w.put(static_cast<double>(pe.sizeof_heap_commit));
}

void write_sections(SliceWriter& w, const PeSummary& pe) {
  constexpr std::uint32_t kRead = 0x40000000, kWrite = 0x80000000, kExec = 0x20000000;
  std::size_t zero_size = 0, empty_name = 0, read_exec = 0, writable = 0;
  std::vector<std::pair<std::string, double>> sizes, entropies, vsizes;
  for (const auto& s : pe.sections) {
    zero_size += s.raw_size == 0;
    empty_name += s.name.empty();
    read_exec += (s.characteristics & kRead) && (s.characteristics & kExec);
    writable += (s.characteristics & kWrite) != 0;
    sizes.emplace_back(s.name, s.raw_size);
    entropies.emplace_back(s.name, s.entropy);
    vsizes.emplace_back(s.name, s.virtual_size);
  }
  w.put(static_cast<double>(pe.sections.size()));
  w.put(static_cast<double>(zero_size));
  w.put(static_cast<double>(empty_name));
  w.put(static_cast<double>(read_exec));
  w.put(static_cast<double>(writable));
  w.put_hashed(sizes, kSectionHashDim);
  w.put_hashed(entropies, kSectionHashDim);
  w.put_hashed(vsizes, kSectionHashDim);

  std::vector<std::string> entry_name;
  std::vector<std::string> entry_props;
  if (!pe.entry_section.empty()) {
    entry_name.push_back(pe.entry_section);
    for (const auto& s : pe.sections) {
      if (s.name != pe.entry_section) continue;
      for (auto& p : section_characteristic_names(s.characteristics)) entry_props.push_back(std::move(p));
    }
  }
  w.put_hashed(entry_name, kSectionHashDim);
  w.put_hashed(entry_props, kSectionHashDim);
}

void write_imports(SliceWriter& w, const PeSummary& pe) {
  std::set<std::string> libraries;
  std::vector<std::string> functions;
  functions.reserve(pe.imports.size());
  for (const auto& imp : pe.imports) {
    auto lib = to_lower(imp.dll);
    functions.push_back(lib + ":" + imp.function);
    libraries.insert(std::move(lib));
  }
  const std::vector<std::string> libs(libraries.begin(), libraries.end());
  w.put_hashed(libs, kLibraryHashDim);
  w.put_hashed(functions, kFunctionHashDim);
}

void write_data_directories(SliceWriter& w, const PeSummary& pe) {
  for (std::size_t i = 0; i < kDataDirectoriesUsed; ++i) {
    w.put(pe.data_directories[i].size);
    w.put(pe.data_directories[i].virtual_address);
  }
}

}  // namespace

FeatureVector vectorize(std::span<const std::uint8_t> bytes, const RawStats& raw,
                        const PeSummary* pe) {
  FeatureVector fv;
  {
    SliceWriter w(fv.group(FeatureGroup::byte_histogram));
    put_normalized(w, raw.byte_histogram);
  }
  {
    SliceWriter w(fv.group(FeatureGroup::byte_entropy_histogram));
    put_normalized(w, raw.byte_entropy_histogram);
  }
  {
    SliceWriter w(fv.group(FeatureGroup::strings));
    write_strings(w, raw.strings);
  }
  {
    SliceWriter w(fv.group(FeatureGroup::general));
    write_general(w, bytes.size(), pe);
  }
  if (pe != nullptr) {
    SliceWriter header(fv.group(FeatureGroup::header));
    write_header(header, *pe);
    SliceWriter sections(fv.group(FeatureGroup::sections));
    write_sections(sections, *pe);
    SliceWriter imports(fv.group(FeatureGroup::imports));
    write_imports(imports, *pe);
    SliceWriter exports(fv.group(FeatureGroup::exports));
    exports.put_hashed(pe->exports, group_slice(FeatureGroup::exports).size);
    SliceWriter dirs(fv.group(FeatureGroup::data_directories));
    write_data_directories(dirs, *pe);
  }
  // The extractor is total: no NaN or Inf ever leaves it.
  for (auto& v : fv.values()) {
    if (!std::isfinite(v)) v = 0.0f;
  }
  return fv;
}

FeatureVector vectorize(std::span<const std::uint8_t> bytes) {
  const RawStats raw = raw_stats(bytes);
  const ParseResult parsed = parse_pe(bytes);
  const auto* pe = std::get_if<PeSummary>(&parsed);
  return vectorize(bytes, raw, pe);
}

}  // namespace pedetect
