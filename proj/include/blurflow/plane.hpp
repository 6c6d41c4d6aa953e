#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace blurflow {

struct Shape {
  int height = 0;
  int width = 0;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense row-major plane of doubles. Used for images, masks and parameter maps.
class Plane {
 public:
  Plane() = default;
  Plane(int height, int width, double fill = 0.0);
  explicit Plane(Shape shape, double fill = 0.0) : Plane(shape.height, shape.width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  Shape shape() const { return {height_, width_}; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int row, int col) { return data_[index(row, col)]; }
  double operator()(int row, int col) const { return data_[index(row, col)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  // Copy of the rectangle [row, row + height) x [col, col + width); pixels outside the frame read as zero.
  Plane crop(int row, int col, int height, int width) const;
  Plane mirrored_horizontal() const;

  double sum() const;
  double mean() const;
  double min() const;
  double max() const;

  Plane& operator*=(double a);
  Plane& operator+=(double a);
  Plane& operator+=(const Plane& other);

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Largest absolute element-wise difference; throws DomainError on shape mismatch.
double max_abs_diff(const Plane& a, const Plane& b);

}  // namespace blurflow
