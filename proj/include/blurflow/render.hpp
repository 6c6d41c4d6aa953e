#pragma once

#include <array>
#include <cstdint>

#include "blurflow/imaging.hpp"
#include "blurflow/pnm.hpp"
#include "blurflow/scene_flow.hpp"

namespace blurflow {

// v1 -> red, v2 -> green over [-1, 1]; v3 -> blue over [0, 1]. Round half up.
// Pixels with w == 1 render as (128, 128, 128).
std::array<std::uint8_t, 3> render_pixel(double v1, double v2, double v3);
RgbImage render_field(const TargetMaps& maps);
RgbImage render_field(const VelocityField& field);

// Inverse of the lateral channel mapping.
double decode_lateral(std::uint8_t channel);

}  // namespace blurflow
