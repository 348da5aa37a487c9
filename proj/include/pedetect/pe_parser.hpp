#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pedetect {

struct SectionInfo {
  std::string name;  // up to 8 raw bytes, non-printables replaced by '?'
  std::uint32_t virtual_size = 0;
  std::uint32_t virtual_address = 0;
  std::uint32_t raw_size = 0;
  std::uint32_t raw_offset = 0;
  std::uint32_t characteristics = 0;
  double entropy = 0.0;  // over the raw bytes present in the file, [0, 8]
};

struct ImportEntry {
  std::string dll;
  std::string function;  // "ordinal<N>" for imports by ordinal
};

struct DataDirectory {
  std::uint32_t virtual_address = 0;
  std::uint32_t size = 0;
};

inline constexpr std::size_t kDataDirectoryCount = 16;

/// Structured view of the PE headers, section table, imports and exports.
struct PeSummary {
  // COFF header
  std::uint16_t machine = 0;
  std::uint16_t declared_sections = 0;
  std::uint32_t timestamp = 0;
  std::uint32_t number_of_symbols = 0;
  std::uint16_t characteristics = 0;

  // Optional header
  std::uint16_t magic = 0;
  std::uint8_t major_linker_version = 0;
  std::uint8_t minor_linker_version = 0;
  std::uint32_t sizeof_code = 0;
  std::uint32_t sizeof_initialized_data = 0;
  std::uint32_t sizeof_uninitialized_data = 0;
  std::uint32_t entry_point_rva = 0;
  std::uint64_t image_base = 0;
  std::uint32_t section_alignment = 0;
  std::uint32_t file_alignment = 0;
  std::uint16_t major_os_version = 0;
  std::uint16_t minor_os_version = 0;
  std::uint16_t major_image_version = 0;
  std::uint16_t minor_image_version = 0;
  std::uint16_t major_subsystem_version = 0;
  std::uint16_t minor_subsystem_version = 0;
  std::uint32_t sizeof_image = 0;
  std::uint32_t sizeof_headers = 0;
  std::uint16_t subsystem = 0;
  std::uint16_t dll_characteristics = 0;
  std::uint64_t sizeof_stack_reserve = 0;
  std::uint64_t sizeof_stack_commit = 0;
  std::uint64_t sizeof_heap_reserve = 0;
  std::uint64_t sizeof_heap_commit = 0;

  // Always kDataDirectoryCount entries; directories beyond
  // NumberOfRvaAndSizes are zero.
  std::array<DataDirectory, kDataDirectoryCount> data_directories{};

  std::vector<SectionInfo> sections;
  std::vector<ImportEntry> imports;
  std::vector<std::string> exports;

  /// Name of the section that contains the entry point, empty if none does.
  std::string entry_section;
};

enum class ParseError { missing_dos_magic, missing_pe_signature, truncated, bad_optional_magic };

/// Where parsing stopped.
enum class ParseStage { dos_header, pe_signature, coff_header, optional_header, section_table };

struct ParseFailure {
  ParseError error;
  ParseStage stage;
  std::string detail;
};

using ParseResult = std::variant<PeSummary, ParseFailure>;

/// Parses PE headers and tables. Never throws on malformed input: structural
/// problems in the headers are returned as a ParseFailure, while damaged
/// import or export tables are skipped (those lists end up short or empty).
ParseResult parse_pe(std::span<const std::uint8_t> bytes);

std::string_view to_string(ParseError error);
std::string_view to_string(ParseStage stage);

// Symbolic names used as hashing tokens.
std::string machine_name(std::uint16_t machine);
std::string subsystem_name(std::uint16_t subsystem);
std::string magic_name(std::uint16_t magic);
std::vector<std::string> coff_characteristic_names(std::uint16_t flags);
std::vector<std::string> dll_characteristic_names(std::uint16_t flags);
std::vector<std::string> section_characteristic_names(std::uint32_t flags);

/// Shannon entropy (log base 2) of a byte sequence; 0 for empty input.
double shannon_entropy(std::span<const std::uint8_t> bytes);

}  // namespace pedetect
