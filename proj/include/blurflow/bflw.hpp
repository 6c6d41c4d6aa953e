#pragma once

#include <cstdint>
#include <string>

#include "blurflow/imaging.hpp"

namespace blurflow {

// BFLW target-map file. 24-byte little-endian header
//
//   offset 0  char[4] "BFLW"
//   offset 4  u16     version (1)
//   offset 6  u16     channels (5)
//   offset 8  u32     height
//   offset 12 u32     width
//   offset 16 u64     sample seed
//
// followed by float32 little-endian planes, row-major, in channel order v1, v2, v3, z0, w.
inline constexpr std::uint16_t kBflwVersion = 1;
inline constexpr std::uint16_t kBflwChannels = 5;
inline constexpr std::size_t kBflwHeaderBytes = 24;

struct BflwFile {
  TargetMaps maps;
  std::uint64_t seed = 0;
};

std::string encode_bflw(const TargetMaps& maps, std::uint64_t seed);
// Throws IoError on bad magic, unsupported version or channel count, or a size mismatch.
BflwFile decode_bflw(const std::string& bytes);

void write_bflw(const std::string& path, const TargetMaps& maps, std::uint64_t seed);
BflwFile read_bflw(const std::string& path);

}  // namespace blurflow
