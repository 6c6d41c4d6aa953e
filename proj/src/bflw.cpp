#include "blurflow/bflw.hpp"

#include <bit>
#include <cstring>

#include "blurflow/error.hpp"
#include "blurflow/pnm.hpp"

namespace blurflow {
namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    value |= static_cast<T>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return value;
}

}  // namespace

std::string encode_bflw(const TargetMaps& maps, std::uint64_t seed) {
  maps.check_shape();
  const Shape s = maps.shape();
  std::string out = "BFLW";
  put_le<std::uint16_t>(out, kBflwVersion);
  put_le<std::uint16_t>(out, kBflwChannels);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.width));
  put_le<std::uint64_t>(out, seed);
  out.reserve(kBflwHeaderBytes + 4 * kBflwChannels * s.pixels());
  for (const Plane* p : {&maps.v1, &maps.v2, &maps.v3, &maps.z0, &maps.w})
    for (double v : p->values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

BflwFile decode_bflw(const std::string& bytes) {
  if (bytes.size() < kBflwHeaderBytes || bytes.compare(0, 4, "BFLW") != 0) throw IoError("not a BFLW file");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  const auto channels = get_le<std::uint16_t>(bytes, 6);
  if (version != kBflwVersion) throw IoError("unsupported BFLW version " + std::to_string(version));
  if (channels != kBflwChannels) throw IoError("BFLW files must carry 5 channels, found " + std::to_string(channels));
  const auto height = get_le<std::uint32_t>(bytes, 8);
  const auto width = get_le<std::uint32_t>(bytes, 12);
  const std::size_t pixels = static_cast<std::size_t>(height) * width;
  if (bytes.size() != kBflwHeaderBytes + 4 * channels * pixels) throw IoError("BFLW payload size mismatch");

  BflwFile f;
  f.seed = get_le<std::uint64_t>(bytes, 16);
  const int h = static_cast<int>(height), w = static_cast<int>(width);
  f.maps = {Plane(h, w), Plane(h, w), Plane(h, w), Plane(h, w), Plane(h, w)};
  std::size_t offset = kBflwHeaderBytes;
  for (Plane* p : {&f.maps.v1, &f.maps.v2, &f.maps.v3, &f.maps.z0, &f.maps.w})
    for (double& v : p->values()) {
      v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset));
      offset += 4;
    }
  return f;
}

void write_bflw(const std::string& path, const TargetMaps& maps, std::uint64_t seed) {
  write_file(path, encode_bflw(maps, seed));
}

BflwFile read_bflw(const std::string& path) {
  try {
    return decode_bflw(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace blurflow
