#include "blurflow/render.hpp"

#include <algorithm>
#include <cmath>

namespace blurflow {
namespace {

std::uint8_t quantize(double unit) {
  return static_cast<std::uint8_t>(std::floor(255.0 * std::clamp(unit, 0.0, 1.0) + 0.5));
}

}  // namespace

std::array<std::uint8_t, 3> render_pixel(double v1, double v2, double v3) {
  return {quantize((v1 + 1.0) / 2.0), quantize((v2 + 1.0) / 2.0), quantize(v3)};
}

RgbImage render_field(const TargetMaps& maps) {
  maps.check_shape();
  RgbImage out{maps.v1.height(), maps.v1.width(), {}};
  out.pixels.resize(maps.v1.size());
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = maps.w[i] == 1.0 ? std::array<std::uint8_t, 3>{128, 128, 128}
                                     : render_pixel(maps.v1[i], maps.v2[i], maps.v3[i]);
  return out;
}

RgbImage render_field(const VelocityField& field) {
  return render_field(make_targets(field, Plane(field.shape(), 0.0)));
}

double decode_lateral(std::uint8_t channel) { return 2.0 * channel / 255.0 - 1.0; }

}  // namespace blurflow
