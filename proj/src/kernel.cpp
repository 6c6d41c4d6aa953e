#include "blurflow/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "blurflow/error.hpp"

namespace blurflow {

Kernel2D Kernel2D::normalized(int size, std::vector<double> weights) {
  if (size <= 0 || size % 2 == 0) throw DomainError("kernel size must be odd and positive");
  if (weights.size() != static_cast<std::size_t>(size) * size) throw DomainError("kernel weight count mismatch");
  double total = 0.0;
  for (double& w : weights) {
    if (!std::isfinite(w)) throw DomainError("kernel weights must be finite");
    w = std::max(w, 0.0);
    total += w;
  }
  if (!(total > 0.0)) throw DomainError("kernel has no positive weight");
  for (double& w : weights) w /= total;
  return Kernel2D(size, std::move(weights));
}

Kernel2D Kernel2D::impulse(int size) {
  std::vector<double> w(static_cast<std::size_t>(size) * size, 0.0);
  w[static_cast<std::size_t>(size / 2) * size + size / 2] = 1.0;
  return normalized(size, std::move(w));
}

Kernel2D::Moments Kernel2D::moments() const {
  const int c = center();
  double cx = 0.0, cy = 0.0;
  for (int y = 0; y < size_; ++y)
    for (int x = 0; x < size_; ++x) {
      cx += at(y, x) * (x - c);
      cy += at(y, x) * (y - c);
    }
  double second = 0.0;
  for (int y = 0; y < size_; ++y)
    for (int x = 0; x < size_; ++x) {
      const double dx = x - c - cx, dy = y - c - cy;
      second += at(y, x) * (dx * dx + dy * dy);
    }
  return {cx, cy, second};
}

Kernel2D Kernel2D::mirrored_horizontal() const {
  std::vector<double> w(weights_.size());
  for (int y = 0; y < size_; ++y)
    for (int x = 0; x < size_; ++x) w[static_cast<std::size_t>(y) * size_ + x] = at(y, size_ - 1 - x);
  return Kernel2D(size_, std::move(w));
}

double max_abs_diff(const Kernel2D& a, const Kernel2D& b) {
  if (a.size() != b.size()) throw DomainError("kernel size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.weights().size(); ++i) worst = std::max(worst, std::abs(a.weights()[i] - b.weights()[i]));
  return worst;
}

double l2_distance(const Kernel2D& a, const Kernel2D& b) {
  if (a.size() != b.size()) throw DomainError("kernel size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.weights().size(); ++i) {
    const double d = a.weights()[i] - b.weights()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace blurflow
