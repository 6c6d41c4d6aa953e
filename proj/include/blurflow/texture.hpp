#pragma once

#include <cstdint>

#include "blurflow/plane.hpp"

namespace blurflow {

// Procedural stand-in for a sharp textured image: a dead-leaves field of occluding discs with
// radii distributed as r^-3 on [1, min(h, w) / 4] and uniform grey levels in [0.05, 0.95].
// The scale-invariant radius law gives natural-image-like statistics with sharp edges at all
// scales. Deterministic per seed.
Plane synthetic_texture(Shape shape, std::uint64_t seed);

}  // namespace blurflow
