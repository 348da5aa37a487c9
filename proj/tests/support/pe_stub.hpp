#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>
#include <vector>

namespace pedetect::testing {

/// Hand-laid-out 512-byte PE32 image: DOS header, PE signature, COFF header,
/// a 224-byte optional header with 16 data directories, and one ".text"
/// section whose raw data holds an import of KERNEL32.dll!ExitProcess and a
/// single `ret` at the entry point.
struct PeStub {
  static constexpr std::size_t kSize = 512;
  static constexpr std::uint32_t kPeOffset = 0x40;
  static constexpr std::uint32_t kCoff = kPeOffset + 4;
  static constexpr std::uint32_t kOptional = kCoff + 20;
  static constexpr std::uint16_t kOptionalSize = 224;
  static constexpr std::uint32_t kSectionTable = kOptional + kOptionalSize;
  static constexpr std::uint32_t kRawOffset = 0x180;
  static constexpr std::uint32_t kRawSize = 0x80;
  static constexpr std::uint32_t kTextRva = 0x1000;
  static constexpr std::uint32_t kEntryRva = 0x1060;
  static constexpr std::uint32_t kTimestamp = 0x5f5e1000;
  static constexpr std::uint64_t kImageBase = 0x400000;

  std::vector<std::uint8_t> bytes = std::vector<std::uint8_t>(kSize, 0);

  template <typename T>
  void put(std::size_t at, T value) {
    std::memcpy(bytes.data() + at, &value, sizeof value);
  }
  void put_text(std::size_t at, std::string_view s) {
    std::memcpy(bytes.data() + at, s.data(), s.size());
  }
  std::size_t file_offset(std::uint32_t rva) const { return kRawOffset + (rva - kTextRva); }

  PeStub() {
    put_text(0, "MZ");
    put<std::uint32_t>(0x3C, kPeOffset);
    put_text(kPeOffset, std::string_view("PE\0\0", 4));

    put<std::uint16_t>(kCoff + 0, 0x14c);  // i386
    put<std::uint16_t>(kCoff + 2, 1);
    put<std::uint32_t>(kCoff + 4, kTimestamp);
    put<std::uint16_t>(kCoff + 16, kOptionalSize);
    put<std::uint16_t>(kCoff + 18, 0x0102);  // executable, 32-bit machine

    const std::size_t o = kOptional;
    put<std::uint16_t>(o + 0, 0x10b);
    bytes[o + 2] = 14;
    bytes[o + 3] = 2;
    put<std::uint32_t>(o + 4, kRawSize);  // SizeOfCode
    put<std::uint32_t>(o + 16, kEntryRva);
    put<std::uint32_t>(o + 20, kTextRva);  // BaseOfCode
    put<std::uint32_t>(o + 28, static_cast<std::uint32_t>(kImageBase));
    put<std::uint32_t>(o + 32, 0x1000);  // SectionAlignment
    put<std::uint32_t>(o + 36, 0x80);    // FileAlignment
    put<std::uint16_t>(o + 40, 6);
    put<std::uint16_t>(o + 48, 6);
    put<std::uint32_t>(o + 56, 0x2000);     // SizeOfImage
    put<std::uint32_t>(o + 60, kRawOffset);  // SizeOfHeaders
    put<std::uint16_t>(o + 68, 3);           // console
    put<std::uint16_t>(o + 70, 0x8140);      // dynamic base, NX, terminal-server aware
    put<std::uint32_t>(o + 72, 0x100000);
    put<std::uint32_t>(o + 76, 0x1000);
    put<std::uint32_t>(o + 80, 0x100000);
    put<std::uint32_t>(o + 84, 0x1000);
    put<std::uint32_t>(o + 92, 16);
    put<std::uint32_t>(o + 96 + 8 * 1, kTextRva);  // import directory
    put<std::uint32_t>(o + 96 + 8 * 1 + 4, 40);

    const std::size_t s = kSectionTable;
    put_text(s, ".text");
    put<std::uint32_t>(s + 8, kRawSize);
    put<std::uint32_t>(s + 12, kTextRva);
    put<std::uint32_t>(s + 16, kRawSize);
    put<std::uint32_t>(s + 20, kRawOffset);
    put<std::uint32_t>(s + 36, 0x60000020);  // code, execute, read

    // Import descriptor, then a null terminator descriptor.
    put<std::uint32_t>(file_offset(0x1000), 0x1028);       // OriginalFirstThunk
    put<std::uint32_t>(file_offset(0x1000) + 12, 0x1040);  // Name
    put<std::uint32_t>(file_offset(0x1000) + 16, 0x1028);  // FirstThunk
    put<std::uint32_t>(file_offset(0x1028), 0x1050);       // hint/name RVA
    put_text(file_offset(0x1040), "KERNEL32.dll");
    put_text(file_offset(0x1052), "ExitProcess");
    bytes[file_offset(kEntryRva)] = 0xC3;
  }
};

}  // namespace pedetect::testing
