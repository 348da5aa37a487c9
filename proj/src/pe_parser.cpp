#include "pedetect/pe_parser.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <optional>
#include <utility>

namespace pedetect {

namespace {

constexpr std::size_t kDosHeaderSize = 0x40;
constexpr std::size_t kCoffHeaderSize = 20;
constexpr std::size_t kSectionHeaderSize = 40;
constexpr std::size_t kImportDescriptorSize = 20;
constexpr std::uint16_t kMagicPe32 = 0x10b;
constexpr std::uint16_t kMagicPe32Plus = 0x20b;
constexpr std::uint16_t kMagicRom = 0x107;

// Hard caps that keep hostile tables from exploding run time.
constexpr std::size_t kMaxImportDescriptors = 4096;
constexpr std::size_t kMaxThunksPerDll = 16384;
constexpr std::size_t kMaxImports = 65536;
constexpr std::size_t kMaxExports = 65536;
constexpr std::size_t kMaxNameLength = 256;

/// Bounds-checked little-endian access into the file image.
class Image {
 public:
  explicit Image(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t size() const { return bytes_.size(); }

  bool has(std::uint64_t offset, std::uint64_t len) const {
    return offset <= bytes_.size() && len <= bytes_.size() - offset;
  }

  template <typename T>
  std::optional<T> read(std::uint64_t offset) const {
    if (!has(offset, sizeof(T))) return std::nullopt;
    T v;
    std::memcpy(&v, bytes_.data() + offset, sizeof(T));
    return v;
  }

  template <typename T>
  T read_or_zero(std::uint64_t offset) const {
    return read<T>(offset).value_or(T{});
  }

  std::span<const std::uint8_t> slice(std::uint64_t offset, std::uint64_t len) const {
    if (offset >= bytes_.size()) return {};
    len = std::min<std::uint64_t>(len, bytes_.size() - offset);
    return bytes_.subspan(offset, len);
  }

  /// NUL-terminated ASCII string; nullopt if it runs off the end or past
  /// kMaxNameLength without a terminator.
  std::optional<std::string> c_string(std::uint64_t offset) const {
    if (offset >= bytes_.size()) return std::nullopt;
    std::string out;
    for (std::uint64_t i = offset; i < bytes_.size(); ++i) {
      const auto c = bytes_[i];
      if (c == 0) return out;
      if (out.size() >= kMaxNameLength) return std::nullopt;
      out.push_back(static_cast<char>(c));
    }
    return std::nullopt;
  }

 private:
  std::span<const std::uint8_t> bytes_;
};

std::string decode_section_name(std::span<const std::uint8_t> raw) {
  std::string name;
  for (auto c : raw) {
    if (c == 0) break;
    name.push_back(c >= 0x20 && c < 0x7F ? static_cast<char>(c) : '?');
  }
  return name;
}

class RvaMapper {
 public:
  RvaMapper(const std::vector<SectionInfo>& sections, std::uint32_t sizeof_headers)
      : sections_(sections), sizeof_headers_(sizeof_headers) {}

  std::optional<std::uint64_t> to_offset(std::uint64_t rva) const {
    for (const auto& s : sections_) {
      const std::uint64_t span = std::max(s.virtual_size, s.raw_size);
      if (rva >= s.virtual_address && rva < std::uint64_t{s.virtual_address} + span) {
        const std::uint64_t delta = rva - s.virtual_address;
        if (delta >= s.raw_size) return std::nullopt;  // lands in the zero-fill tail
        return std::uint64_t{s.raw_offset} + delta;
      }
    }
    if (rva < sizeof_headers_) return rva;
    return std::nullopt;
  }

 private:
  const std::vector<SectionInfo>& sections_;
  std::uint32_t sizeof_headers_;
};

ParseFailure fail(ParseError e, ParseStage s, std::string detail) {
  return ParseFailure{e, s, std::move(detail)};
}

void parse_imports(const Image& img, const RvaMapper& map, const DataDirectory& dir,
                   bool pe32plus, std::vector<ImportEntry>& out) {
  if (dir.virtual_address == 0) return;
  const auto base = map.to_offset(dir.virtual_address);
  if (!base) return;
  const std::size_t thunk_size = pe32plus ? 8 : 4;
  const std::uint64_t ordinal_flag = pe32plus ? (1ULL << 63) : (1ULL << 31);

  for (std::size_t d = 0; d < kMaxImportDescriptors; ++d) {
    const std::uint64_t desc = *base + d * kImportDescriptorSize;
    if (!img.has(desc, kImportDescriptorSize)) return;
    const auto original_first_thunk = img.read_or_zero<std::uint32_t>(desc);
    const auto name_rva = img.read_or_zero<std::uint32_t>(desc + 12);
    const auto first_thunk = img.read_or_zero<std::uint32_t>(desc + 16);
    if (original_first_thunk == 0 && name_rva == 0 && first_thunk == 0) return;

    const auto name_off = map.to_offset(name_rva);
    if (!name_off) continue;
    const auto dll = img.c_string(*name_off);
    if (!dll || dll->empty()) continue;

    const std::uint32_t thunk_rva = original_first_thunk != 0 ? original_first_thunk : first_thunk;
    const auto thunk_off = map.to_offset(thunk_rva);
    if (!thunk_off) continue;
    for (std::size_t t = 0; t < kMaxThunksPerDll; ++t) {
      const std::uint64_t at = *thunk_off + t * thunk_size;
      if (!img.has(at, thunk_size)) break;
      const std::uint64_t thunk = pe32plus ? img.read_or_zero<std::uint64_t>(at)
                                           : img.read_or_zero<std::uint32_t>(at);
      if (thunk == 0) break;
      if (out.size() >= kMaxImports) return;
      if (thunk & ordinal_flag) {
        out.push_back({*dll, "ordinal" + std::to_string(thunk & 0xFFFF)});
        continue;
      }
      const auto hint_off = map.to_offset(thunk & 0x7FFFFFFF);
      if (!hint_off) break;
      const auto fn = img.c_string(*hint_off + 2);
      if (!fn) break;
      out.push_back({*dll, *fn});
    }
  }
}

void parse_exports(const Image& img, const RvaMapper& map, const DataDirectory& dir,
                   std::vector<std::string>& out) {
  if (dir.virtual_address == 0) return;
  const auto base = map.to_offset(dir.virtual_address);
  if (!base || !img.has(*base, 40)) return;
  const auto number_of_names = img.read_or_zero<std::uint32_t>(*base + 24);
  const auto names_rva = img.read_or_zero<std::uint32_t>(*base + 32);
  const auto names_off = map.to_offset(names_rva);
  if (!names_off) return;
  const std::size_t n = std::min<std::size_t>(number_of_names, kMaxExports);
  for (std::size_t i = 0; i < n; ++i) {
    const auto name_rva = img.read<std::uint32_t>(*names_off + 4 * i);
    if (!name_rva) return;
    const auto name_off = map.to_offset(*name_rva);
    if (!name_off) continue;
    if (auto name = img.c_string(*name_off)) out.push_back(std::move(*name));
  }
}

template <typename Flag>
std::vector<std::string> flag_names(std::uint64_t flags,
                                    std::span<const std::pair<Flag, std::string_view>> table) {
  std::vector<std::string> names;
  for (const auto& [bit, name] : table) {
    if (flags & bit) names.emplace_back(name);
  }
  return names;
}

}  // namespace

double shannon_entropy(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return 0.0;
  std::array<std::uint64_t, 256> counts{};
  for (auto b : bytes) ++counts[b];
  const double n = static_cast<double>(bytes.size());
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return std::clamp(h, 0.0, 8.0);
}

ParseResult parse_pe(std::span<const std::uint8_t> bytes) {
  const Image img(bytes);
  if (img.size() < 2 || bytes[0] != 'M' || bytes[1] != 'Z') {
    return fail(ParseError::missing_dos_magic, ParseStage::dos_header, "no MZ signature");
  }
  if (img.size() < kDosHeaderSize) {
    return fail(ParseError::truncated, ParseStage::dos_header,
                "file shorter than the 64-byte DOS header");
  }
  const std::uint32_t pe_offset = img.read_or_zero<std::uint32_t>(0x3C);
  if (!img.has(pe_offset, 4)) {
    return fail(ParseError::truncated, ParseStage::pe_signature,
                "e_lfanew " + std::to_string(pe_offset) + " points past end of file");
  }
  if (img.read_or_zero<std::uint32_t>(pe_offset) != 0x00004550) {
    return fail(ParseError::missing_pe_signature, ParseStage::pe_signature, "no PE\\0\\0 signature");
  }

  const std::uint64_t coff = std::uint64_t{pe_offset} + 4;
  if (!img.has(coff, kCoffHeaderSize)) {
    return fail(ParseError::truncated, ParseStage::coff_header, "COFF header cut short");
  }
  PeSummary pe;
  pe.machine = img.read_or_zero<std::uint16_t>(coff);
  pe.declared_sections = img.read_or_zero<std::uint16_t>(coff + 2);
  pe.timestamp = img.read_or_zero<std::uint32_t>(coff + 4);
  pe.number_of_symbols = img.read_or_zero<std::uint32_t>(coff + 12);
  const auto optional_size = img.read_or_zero<std::uint16_t>(coff + 16);
  pe.characteristics = img.read_or_zero<std::uint16_t>(coff + 18);

  const std::uint64_t opt = coff + kCoffHeaderSize;
  bool pe32plus = false;
  if (optional_size > 0) {
    if (!img.has(opt, optional_size)) {
      return fail(ParseError::truncated, ParseStage::optional_header,
                  "optional header of " + std::to_string(optional_size) + " bytes runs past end of file");
    }
    pe.magic = img.read_or_zero<std::uint16_t>(opt);
    if (pe.magic != kMagicPe32 && pe.magic != kMagicPe32Plus && pe.magic != kMagicRom) {
      return fail(ParseError::bad_optional_magic, ParseStage::optional_header,
                  "unknown optional header magic " + std::to_string(pe.magic));
    }
    pe32plus = pe.magic == kMagicPe32Plus;
    const std::size_t min_size = pe32plus ? 112 : 96;
    if (optional_size < min_size) {
      return fail(ParseError::truncated, ParseStage::optional_header,
                  "optional header smaller than its fixed fields");
    }
    pe.major_linker_version = img.read_or_zero<std::uint8_t>(opt + 2);
    pe.minor_linker_version = img.read_or_zero<std::uint8_t>(opt + 3);
    pe.sizeof_code = img.read_or_zero<std::uint32_t>(opt + 4);
    pe.sizeof_initialized_data = img.read_or_zero<std::uint32_t>(opt + 8);
    pe.sizeof_uninitialized_data = img.read_or_zero<std::uint32_t>(opt + 12);
    pe.entry_point_rva = img.read_or_zero<std::uint32_t>(opt + 16);
    pe.image_base = pe32plus ? img.read_or_zero<std::uint64_t>(opt + 24)
                             : img.read_or_zero<std::uint32_t>(opt + 28);
    pe.section_alignment = img.read_or_zero<std::uint32_t>(opt + 32);
    pe.file_alignment = img.read_or_zero<std::uint32_t>(opt + 36);
    pe.major_os_version = img.read_or_zero<std::uint16_t>(opt + 40);
    pe.minor_os_version = img.read_or_zero<std::uint16_t>(opt + 42);
    pe.major_image_version = img.read_or_zero<std::uint16_t>(opt + 44);
    pe.minor_image_version = img.read_or_zero<std::uint16_t>(opt + 46);
    pe.major_subsystem_version = img.read_or_zero<std::uint16_t>(opt + 48);
    pe.minor_subsystem_version = img.read_or_zero<std::uint16_t>(opt + 50);
    pe.sizeof_image = img.read_or_zero<std::uint32_t>(opt + 56);
    pe.sizeof_headers = img.read_or_zero<std::uint32_t>(opt + 60);
    pe.subsystem = img.read_or_zero<std::uint16_t>(opt + 68);
    pe.dll_characteristics = img.read_or_zero<std::uint16_t>(opt + 70);
    std::uint64_t dir_count_at;
    if (pe32plus) {
      pe.sizeof_stack_reserve = img.read_or_zero<std::uint64_t>(opt + 72);
      pe.sizeof_stack_commit = img.read_or_zero<std::uint64_t>(opt + 80);
      pe.sizeof_heap_reserve = img.read_or_zero<std::uint64_t>(opt + 88);
      pe.sizeof_heap_commit = img.read_or_zero<std::uint64_t>(opt + 96);
      dir_count_at = opt + 108;
    } else {
      pe.sizeof_stack_reserve = img.read_or_zero<std::uint32_t>(opt + 72);
      pe.sizeof_stack_commit = img.read_or_zero<std::uint32_t>(opt + 76);
      pe.sizeof_heap_reserve = img.read_or_zero<std::uint32_t>(opt + 80);
      pe.sizeof_heap_commit = img.read_or_zero<std::uint32_t>(opt + 84);
      dir_count_at = opt + 92;
    }
    const auto declared_dirs = img.read_or_zero<std::uint32_t>(dir_count_at);
    const std::uint64_t dirs = dir_count_at + 4;
    // Only directories that fit inside the declared optional header count.
    const std::uint64_t room = (opt + optional_size > dirs) ? (opt + optional_size - dirs) / 8 : 0;
    const std::size_t n_dirs =
        static_cast<std::size_t>(std::min<std::uint64_t>({declared_dirs, room, kDataDirectoryCount}));
    for (std::size_t i = 0; i < n_dirs; ++i) {
      pe.data_directories[i].virtual_address = img.read_or_zero<std::uint32_t>(dirs + 8 * i);
      pe.data_directories[i].size = img.read_or_zero<std::uint32_t>(dirs + 8 * i + 4);
    }
  }

  const std::uint64_t table = opt + optional_size;
  const std::uint64_t table_size = std::uint64_t{pe.declared_sections} * kSectionHeaderSize;
  if (!img.has(table, table_size)) {
    return fail(ParseError::truncated, ParseStage::section_table,
                "section table of " + std::to_string(pe.declared_sections) +
                    " entries runs past end of file");
  }
  pe.sections.reserve(pe.declared_sections);
  for (std::size_t i = 0; i < pe.declared_sections; ++i) {
    const std::uint64_t at = table + i * kSectionHeaderSize;
    SectionInfo s;
    s.name = decode_section_name(img.slice(at, 8));
    s.virtual_size = img.read_or_zero<std::uint32_t>(at + 8);
    s.virtual_address = img.read_or_zero<std::uint32_t>(at + 12);
    s.raw_size = img.read_or_zero<std::uint32_t>(at + 16);
    s.raw_offset = img.read_or_zero<std::uint32_t>(at + 20);
    s.characteristics = img.read_or_zero<std::uint32_t>(at + 36);
    s.entropy = shannon_entropy(img.slice(s.raw_offset, s.raw_size));
    pe.sections.push_back(std::move(s));
  }

  for (const auto& s : pe.sections) {
    const std::uint64_t span = std::max(s.virtual_size, s.raw_size);
    if (pe.entry_point_rva >= s.virtual_address &&
        pe.entry_point_rva < std::uint64_t{s.virtual_address} + span) {
      pe.entry_section = s.name;
      break;
    }
  }

  const RvaMapper map(pe.sections, pe.sizeof_headers);
  parse_imports(img, map, pe.data_directories[1], pe32plus, pe.imports);
  parse_exports(img, map, pe.data_directories[0], pe.exports);
  return pe;
}

std::string_view to_string(ParseError error) {
  switch (error) {
    case ParseError::missing_dos_magic: return "missing-dos-magic";
    case ParseError::missing_pe_signature: return "missing-pe-signature";
    case ParseError::truncated: return "truncated";
    case ParseError::bad_optional_magic: return "bad-optional-magic";
  }
  return "unknown";
}

std::string_view to_string(ParseStage stage) {
  switch (stage) {
    case ParseStage::dos_header: return "dos-header";
    case ParseStage::pe_signature: return "pe-signature";
    case ParseStage::coff_header: return "coff-header";
    case ParseStage::optional_header: return "optional-header";
    case ParseStage::section_table: return "section-table";
  }
  return "unknown";
}

std::string machine_name(std::uint16_t machine) {
  switch (machine) {
    case 0x0: return "UNKNOWN";
    case 0x14c: return "I386";
    case 0x8664: return "AMD64";
    case 0x1c0: return "ARM";
    case 0x1c4: return "ARMNT";
    case 0xaa64: return "ARM64";
    case 0x200: return "IA64";
    case 0x1c2: return "THUMB";
    case 0x166: return "R4000";
    case 0x1f0: return "POWERPC";
    case 0xebc: return "EBC";
  }
  return "MACHINE_" + std::to_string(machine);
}

std::string subsystem_name(std::uint16_t subsystem) {
  switch (subsystem) {
    case 0: return "UNKNOWN";
    case 1: return "NATIVE";
    case 2: return "WINDOWS_GUI";
    case 3: return "WINDOWS_CUI";
    case 5: return "OS2_CUI";
    case 7: return "POSIX_CUI";
    case 9: return "WINDOWS_CE_GUI";
    case 10: return "EFI_APPLICATION";
    case 11: return "EFI_BOOT_SERVICE_DRIVER";
    case 12: return "EFI_RUNTIME_DRIVER";
    case 13: return "EFI_ROM";
    case 14: return "XBOX";
    case 16: return "WINDOWS_BOOT_APPLICATION";
  }
  return "SUBSYSTEM_" + std::to_string(subsystem);
}

std::string magic_name(std::uint16_t magic) {
  switch (magic) {
    case kMagicPe32: return "PE32";
    case kMagicPe32Plus: return "PE32_PLUS";
    case kMagicRom: return "ROM";
  }
  return "MAGIC_" + std::to_string(magic);
}

std::vector<std::string> coff_characteristic_names(std::uint16_t flags) {
  static constexpr std::pair<std::uint16_t, std::string_view> kTable[] = {
      {0x0001, "RELOCS_STRIPPED"},     {0x0002, "EXECUTABLE_IMAGE"},
      {0x0004, "LINE_NUMS_STRIPPED"},  {0x0008, "LOCAL_SYMS_STRIPPED"},
      {0x0010, "AGGRESSIVE_WS_TRIM"},  {0x0020, "LARGE_ADDRESS_AWARE"},
      {0x0080, "BYTES_REVERSED_LO"},   {0x0100, "CHARA_32BIT_MACHINE"},
      {0x0200, "DEBUG_STRIPPED"},      {0x0400, "REMOVABLE_RUN_FROM_SWAP"},
      {0x0800, "NET_RUN_FROM_SWAP"},   {0x1000, "SYSTEM"},
      {0x2000, "DLL"},                 {0x4000, "UP_SYSTEM_ONLY"},
      {0x8000, "BYTES_REVERSED_HI"},
  };
  return flag_names<std::uint16_t>(flags, kTable);
}

std::vector<std::string> dll_characteristic_names(std::uint16_t flags) {
  static constexpr std::pair<std::uint16_t, std::string_view> kTable[] = {
      {0x0020, "HIGH_ENTROPY_VA"}, {0x0040, "DYNAMIC_BASE"},   {0x0080, "FORCE_INTEGRITY"},
      {0x0100, "NX_COMPAT"},       {0x0200, "NO_ISOLATION"},   {0x0400, "NO_SEH"},
      {0x0800, "NO_BIND"},         {0x1000, "APPCONTAINER"},   {0x2000, "WDM_DRIVER"},
      {0x4000, "GUARD_CF"},        {0x8000, "TERMINAL_SERVER_AWARE"},
  };
  return flag_names<std::uint16_t>(flags, kTable);
}

std::vector<std::string> section_characteristic_names(std::uint32_t flags) {
  static constexpr std::pair<std::uint32_t, std::string_view> kTable[] = {
      {0x00000020, "CNT_CODE"},          {0x00000040, "CNT_INITIALIZED_DATA"},
      {0x00000080, "CNT_UNINITIALIZED_DATA"}, {0x00000200, "LNK_INFO"},
      {0x00000800, "LNK_REMOVE"},        {0x00001000, "LNK_COMDAT"},
      {0x00008000, "GPREL"},             {0x01000000, "LNK_NRELOC_OVFL"},
      {0x02000000, "MEM_DISCARDABLE"},   {0x04000000, "MEM_NOT_CACHED"},
      {0x08000000, "MEM_NOT_PAGED"},     {0x10000000, "MEM_SHARED"},
      {0x20000000, "MEM_EXECUTE"},       {0x40000000, "MEM_READ"},
      {0x80000000, "MEM_WRITE"},
  };
  return flag_names<std::uint32_t>(flags, kTable);
}

}  // namespace pedetect
