#include "blurflow/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "blurflow/error.hpp"

namespace blurflow {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

std::string encode_pgm16(const Plane& image) {
  std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n65535\n";
  out.reserve(out.size() + 2 * image.size());
  for (double v : image.values()) {
    const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    const auto q = static_cast<std::uint16_t>(std::floor(c * 65535.0 + 0.5));
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  return out;
}

void write_pgm16(const std::string& path, const Plane& image) { write_file(path, encode_pgm16(image)); }

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

int parse_positive(const std::string& token, const char* what) {
  try {
    const int v = std::stoi(token);
    if (v > 0) return v;
  } catch (const std::exception&) {
  }
  throw IoError(std::string("malformed PNM ") + what);
}

}  // namespace

Plane decode_pnm(const std::string& bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic != "P5" && magic != "P6") throw IoError("unsupported PNM magic '" + magic + "'");
  const int width = parse_positive(next_token(bytes, pos), "width");
  const int height = parse_positive(next_token(bytes, pos), "height");
  const int maxval = parse_positive(next_token(bytes, pos), "maxval");
  if (maxval > 65535) throw IoError("PNM maxval exceeds 65535");
  ++pos;  // single whitespace byte before the raster
  const int channels = magic == "P6" ? 3 : 1;
  const int bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(width) * height * channels * bytes_per;
  if (bytes.size() < pos + need) throw IoError("truncated PNM raster");

  Plane out(height, width);
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const std::size_t k = (i * channels + c) * bytes_per;
      acc += bytes_per == 2 ? static_cast<double>((raw[k] << 8) | raw[k + 1]) : static_cast<double>(raw[k]);
    }
    out[i] = acc / (channels * static_cast<double>(maxval));
  }
  return out;
}

Plane read_pnm(const std::string& path) {
  try {
    return decode_pnm(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_ppm(const std::string& path, const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  for (const auto& px : image.pixels) out.append(reinterpret_cast<const char*>(px.data()), 3);
  write_file(path, out);
}

}  // namespace blurflow
