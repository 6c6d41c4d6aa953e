#pragma once

#include <complex>
#include <span>

namespace blurflow {

// In-place 2D complex FFT over an owned, FFTW-aligned buffer.
//
// Plans are created with FFTW_ESTIMATE so results are reproducible run to run.
// Planning is serialized internally; execution on distinct instances is safe
// from multiple threads. A single instance is not.
class Fft2d {
 public:
  Fft2d(int rows, int cols);
  ~Fft2d();

  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;
  Fft2d(Fft2d&& other) noexcept;
  Fft2d& operator=(Fft2d&& other) noexcept;

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  std::span<std::complex<double>> buffer() { return {data_, size()}; }
  std::span<const std::complex<double>> buffer() const { return {data_, size()}; }
  std::complex<double>& at(int row, int col) { return data_[static_cast<std::size_t>(row) * cols_ + col]; }

  void forward();
  // Inverse transform, scaled by 1/(rows*cols) so forward() then inverse() is the identity.
  void inverse();

 private:
  std::size_t size() const { return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_); }
  void release();

  int rows_ = 0;
  int cols_ = 0;
  std::complex<double>* data_ = nullptr;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

// Smallest n' >= n whose only prime factors are 2, 3, 5 and 7.
int fft_friendly_size(int n);

}  // namespace blurflow
