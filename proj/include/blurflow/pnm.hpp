#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "blurflow/plane.hpp"

namespace blurflow {

// 16-bit binary PGM (P5, maxval 65535, big-endian). Values are clipped to [0, 1] and
// quantized as floor(v * 65535 + 0.5).
std::string encode_pgm16(const Plane& image);
void write_pgm16(const std::string& path, const Plane& image);

// Reads P5 (8- or 16-bit) or P6 (converted to the channel mean), scaled to [0, 1].
Plane decode_pnm(const std::string& bytes);
Plane read_pnm(const std::string& path);

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::array<std::uint8_t, 3>> pixels;  // row-major

  std::array<std::uint8_t, 3> at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

// 8-bit binary PPM (P6).
void write_ppm(const std::string& path, const RgbImage& image);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace blurflow
