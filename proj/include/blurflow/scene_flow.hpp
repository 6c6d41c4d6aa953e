#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "blurflow/optics.hpp"
#include "blurflow/plane.hpp"

namespace blurflow {

// Exact partition of a frame into `count` regions, stored as one label per pixel.
class MaskSet {
 public:
  // Throws DomainError if a label is outside [0, count).
  MaskSet(Shape shape, int count, std::vector<int> labels);

  Shape shape() const { return shape_; }
  int count() const { return count_; }
  int label(int row, int col) const { return labels_[static_cast<std::size_t>(row) * shape_.width + col]; }
  std::span<const int> labels() const { return labels_; }

  // Binary plane of region n.
  Plane mask(int n) const;
  std::size_t area(int n) const;

  friend bool operator==(const MaskSet&, const MaskSet&) = default;

 private:
  Shape shape_;
  int count_ = 0;
  std::vector<int> labels_;
};

// Per-pixel motion maps.
struct VelocityField {
  Plane v1, v2, v3, z0;

  Shape shape() const { return v1.shape(); }
  MotionParams at(int row, int col) const { return {v1(row, col), v2(row, col), v3(row, col), z0(row, col)}; }
  void set(int row, int col, const MotionParams& p);
  // Throws DomainError if any pixel leaves the sampling ranges.
  void validate() const;
};

// Voronoi partition around n seed pixels drawn without replacement from a counter-based
// stream keyed on seed. Equidistant pixels go to the lowest seed index.
MaskSet generate_masks(Shape shape, int n, std::uint64_t seed);

// Two regions split by the vertical line col = split_col (left is region 0).
MaskSet split_masks(Shape shape, int split_col);

// v1, v2 ~ U[-1, 1]; v3, z0 ~ U[0, 1].
std::vector<MotionParams> sample_motion_params(int n, std::uint64_t seed);

// Side view of a rotating cylinder: lateral flow at the bottom row turning into purely axial
// flow at the top row with constant speed v_max.
VelocityField cylinder_flow_field(Shape shape, double v_max);

VelocityField field_from_masks(const MaskSet& masks, std::span<const MotionParams> params);

}  // namespace blurflow
