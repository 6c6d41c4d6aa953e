#include "blurflow/scene_flow.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "blurflow/error.hpp"
#include "blurflow/rng.hpp"

namespace blurflow {

MaskSet::MaskSet(Shape shape, int count, std::vector<int> labels)
    : shape_(shape), count_(count), labels_(std::move(labels)) {
  if (count < 1) throw DomainError("mask count must be >= 1");
  if (labels_.size() != shape.pixels()) throw DomainError("label map does not match the frame");
  for (int l : labels_)
    if (l < 0 || l >= count) throw DomainError("mask label out of range");
}

Plane MaskSet::mask(int n) const {
  Plane out(shape_);
  for (std::size_t i = 0; i < labels_.size(); ++i) out[i] = labels_[i] == n ? 1.0 : 0.0;
  return out;
}

std::size_t MaskSet::area(int n) const {
  std::size_t a = 0;
  for (int l : labels_) a += l == n;
  return a;
}

void VelocityField::set(int row, int col, const MotionParams& p) {
  v1(row, col) = p.v1;
  v2(row, col) = p.v2;
  v3(row, col) = p.v3;
  z0(row, col) = p.z0;
}

void VelocityField::validate() const {
  for (int y = 0; y < v1.height(); ++y)
    for (int x = 0; x < v1.width(); ++x) at(y, x).validate();
}

MaskSet generate_masks(Shape shape, int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("mask count must be >= 1");
  if (shape.height < 16 || shape.width < 16) throw DomainError("mask frame must be at least 16x16");
  if (static_cast<std::size_t>(n) > shape.pixels()) throw DomainError("more masks than pixels");

  CounterRng rng(seed);
  std::vector<std::pair<int, int>> seeds;
  std::unordered_set<std::size_t> taken;
  while (static_cast<int>(seeds.size()) < n) {
    const auto row = static_cast<int>(rng.uniform() * shape.height);
    const auto col = static_cast<int>(rng.uniform() * shape.width);
    if (taken.insert(static_cast<std::size_t>(row) * shape.width + col).second) seeds.emplace_back(row, col);
  }

  std::vector<int> labels(shape.pixels());
  for (int y = 0; y < shape.height; ++y)
    for (int x = 0; x < shape.width; ++x) {
      long best = std::numeric_limits<long>::max();
      int label = 0;
      for (int s = 0; s < n; ++s) {
        const long dy = y - seeds[s].first, dx = x - seeds[s].second;
        const long d = dy * dy + dx * dx;
        if (d < best) {
          best = d;
          label = s;
        }
      }
      labels[static_cast<std::size_t>(y) * shape.width + x] = label;
    }
  return MaskSet(shape, n, std::move(labels));
}

MaskSet split_masks(Shape shape, int split_col) {
  std::vector<int> labels(shape.pixels());
  for (int y = 0; y < shape.height; ++y)
    for (int x = 0; x < shape.width; ++x) labels[static_cast<std::size_t>(y) * shape.width + x] = x < split_col ? 0 : 1;
  return MaskSet(shape, 2, std::move(labels));
}

std::vector<MotionParams> sample_motion_params(int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("parameter count must be >= 1");
  std::vector<MotionParams> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(derive_key(seed, static_cast<std::uint64_t>(i)));
    MotionParams p;
    p.v1 = 2.0 * rng.uniform() - 1.0;
    p.v2 = 2.0 * rng.uniform() - 1.0;
    p.v3 = rng.uniform();
    p.z0 = rng.uniform();
    out.push_back(p);
  }
  return out;
}

VelocityField cylinder_flow_field(Shape shape, double v_max) {
  if (shape.height < 1 || shape.width < 1) throw DomainError("empty frame");
  if (!(v_max > 0.0 && v_max <= 1.0)) throw DomainError("v_max must lie in (0, 1]");
  VelocityField f{Plane(shape), Plane(shape), Plane(shape), Plane(shape)};
  for (int row = 0; row < shape.height; ++row) {
    // y = 0 at the bottom row, 1 at the top row.
    const double y = shape.height == 1 ? 0.0 : static_cast<double>(shape.height - 1 - row) / (shape.height - 1);
    const double phi = y * std::numbers::pi / 2.0;
    for (int col = 0; col < shape.width; ++col) {
      f.v2(row, col) = v_max * std::cos(phi);
      f.v3(row, col) = v_max * std::sin(phi);
    }
  }
  return f;
}

VelocityField field_from_masks(const MaskSet& masks, std::span<const MotionParams> params) {
  if (params.size() != static_cast<std::size_t>(masks.count()))
    throw DomainError("need exactly one MotionParams per mask");
  const Shape s = masks.shape();
  VelocityField f{Plane(s), Plane(s), Plane(s), Plane(s)};
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) f.set(y, x, params[masks.label(y, x)]);
  return f;
}

}  // namespace blurflow
