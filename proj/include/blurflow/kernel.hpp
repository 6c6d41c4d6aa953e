#pragma once

#include <span>
#include <vector>

namespace blurflow {

// Square, odd-sized, non-negative convolution kernel with unit sum. Index (row, col)
// holds the weight for displacement (col - center, row - center).
class Kernel2D {
 public:
  // Clamps negative weights to zero and renormalizes. Throws DomainError if the size is not
  // odd, the weight count is wrong, or nothing positive remains.
  static Kernel2D normalized(int size, std::vector<double> weights);
  // Unit impulse at the center.
  static Kernel2D impulse(int size);

  int size() const { return size_; }
  int center() const { return size_ / 2; }
  double at(int row, int col) const { return weights_[static_cast<std::size_t>(row) * size_ + col]; }
  std::span<const double> weights() const { return weights_; }

  struct Moments {
    double cx;  // centroid column offset from center, px
    double cy;  // centroid row offset from center, px
    double second;  // central second moment E[(x-cx)^2 + (y-cy)^2], px^2
  };
  Moments moments() const;

  Kernel2D mirrored_horizontal() const;

 private:
  Kernel2D(int size, std::vector<double> weights) : size_(size), weights_(std::move(weights)) {}

  int size_ = 1;
  std::vector<double> weights_;
};

double max_abs_diff(const Kernel2D& a, const Kernel2D& b);
// Euclidean distance between weight vectors.
double l2_distance(const Kernel2D& a, const Kernel2D& b);

}  // namespace blurflow
