#include "blurflow/plane.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blurflow/error.hpp"

namespace blurflow {

Plane::Plane(int height, int width, double fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw DomainError("plane dimensions must be non-negative");
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
}

Plane Plane::crop(int row, int col, int height, int width) const {
  Plane out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = row + y;
    if (sy < 0 || sy >= height_) continue;
    for (int x = 0; x < width; ++x) {
      const int sx = col + x;
      if (sx < 0 || sx >= width_) continue;
      out(y, x) = (*this)(sy, sx);
    }
  }
  return out;
}

Plane Plane::mirrored_horizontal() const {
  Plane out(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out(y, x) = (*this)(y, width_ - 1 - x);
  return out;
}

double Plane::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Plane::mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

double Plane::min() const { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }

double Plane::max() const { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }

Plane& Plane::operator*=(double a) {
  for (double& v : data_) v *= a;
  return *this;
}

Plane& Plane::operator+=(double a) {
  for (double& v : data_) v += a;
  return *this;
}

Plane& Plane::operator+=(const Plane& other) {
  if (other.shape() != shape()) throw DomainError("plane shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

double max_abs_diff(const Plane& a, const Plane& b) {
  if (a.shape() != b.shape()) throw DomainError("plane shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace blurflow
