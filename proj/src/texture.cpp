#include "blurflow/texture.hpp"

#include <algorithm>
#include <cmath>

#include "blurflow/error.hpp"
#include "blurflow/rng.hpp"

namespace blurflow {

Plane synthetic_texture(Shape shape, std::uint64_t seed) {
  if (shape.height < 1 || shape.width < 1) throw DomainError("empty texture frame");
  constexpr double kUnset = -1.0;
  constexpr double kMinRadius = 1.0;
  const double max_radius = std::max(2.0, std::min(shape.height, shape.width) / 4.0);
  const double a = 1.0 / (kMinRadius * kMinRadius), b = 1.0 / (max_radius * max_radius);

  // Front-to-back painting: a disc only claims pixels no earlier (nearer) disc covers.
  Plane img(shape, kUnset);
  std::size_t uncovered = shape.pixels();
  const std::size_t budget = 64 * shape.pixels();
  CounterRng rng(seed);
  for (std::size_t n = 0; n < budget && uncovered > 0; ++n) {
    const double r = 1.0 / std::sqrt(a - rng.uniform() * (a - b));  // inverse CDF of r^-3
    const double cy = rng.uniform() * shape.height;
    const double cx = rng.uniform() * shape.width;
    const double grey = 0.05 + 0.9 * rng.uniform();
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r))), y1 = std::min(shape.height - 1, static_cast<int>(cy + r));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r))), x1 = std::min(shape.width - 1, static_cast<int>(cx + r));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        if (dy * dy + dx * dx <= r * r && img(y, x) == kUnset) {
          img(y, x) = grey;
          --uncovered;
        }
      }
  }
  for (double& v : img.values())
    if (v == kUnset) v = 0.5;
  return img;
}

}  // namespace blurflow
