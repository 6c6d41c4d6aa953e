#include "blurflow/psf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "blurflow/error.hpp"
#include "blurflow/zernike.hpp"

namespace blurflow {
namespace {

int padded_grid(const OpticsConfig& o) {
  o.validate();
  const int n = o.pad_factor * o.kernel_size_px;
  return n % 2 == 0 ? n + 1 : n;
}

// Signed frequency index for an FFT bin.
int signed_bin(int k, int n) { return k <= (n - 1) / 2 ? k : k - n; }

int wrap(int k, int n) { return ((k % n) + n) % n; }

}  // namespace

PsfModel::PsfModel(const OpticsConfig& optics) : optics_(optics), grid_(padded_grid(optics)), fft_(grid_, grid_) {
  const int n = grid_;
  const double cutoff = optics_.numerical_aperture / optics_.wavelength_um;  // cycles per um
  for (int ky = 0; ky < n; ++ky) {
    const double fy = static_cast<double>(signed_bin(ky, n)) / n;
    for (int kx = 0; kx < n; ++kx) {
      const double fx = static_cast<double>(signed_bin(kx, n)) / n;
      const double rho = std::hypot(fx, fy) / optics_.pixel_pitch_um / cutoff;
      if (rho > 1.0) continue;
      const double amplitude = std::exp(-(rho * rho) / (kPupilApodization * kPupilApodization));
      pupil_.push_back({static_cast<std::size_t>(ky) * n + kx, amplitude, zernike(4, rho, std::atan2(fy, fx)), fx, fy});
    }
  }
  phase_.resize(pupil_.size());
  phase_step_.resize(pupil_.size());
  accum_.assign(static_cast<std::size_t>(n) * n, 0.0);

  accumulate(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1);
  const double total = std::accumulate(accum_.begin(), accum_.end(), 0.0);
  const int c = optics_.kernel_size_px / 2;
  auto box_energy = [&](int r) {
    double s = 0.0;
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x) s += accum_[static_cast<std::size_t>(wrap(y, n)) * n + wrap(x, n)];
    return s / total;
  };
  in_focus_fraction_ = box_energy(c);
  in_focus_radius_ = 0;
  while (in_focus_radius_ < (n - 1) / 2 && box_energy(in_focus_radius_) < 0.99) ++in_focus_radius_;
  if (in_focus_fraction_ < 0.99) {
    std::ostringstream msg;
    msg << "kernel_size_px=" << optics_.kernel_size_px << " holds only " << 100.0 * in_focus_fraction_
        << "% of the in-focus PSF energy; at least " << 2 * in_focus_radius_ + 1 << " is needed";
    throw ConfigError(msg.str());
  }
}

void PsfModel::accumulate(double z_start, double z_step, double x_start, double x_step, double y_start,
                          double y_step, int steps) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double dof = optics_.dof_scale;
  for (std::size_t b = 0; b < pupil_.size(); ++b) {
    const PupilBin& p = pupil_[b];
    const double start = dof * z_start * p.defocus - two_pi * (p.fx * x_start + p.fy * y_start);
    const double step = dof * z_step * p.defocus - two_pi * (p.fx * x_step + p.fy * y_step);
    phase_[b] = std::polar(p.amplitude, start);
    phase_step_[b] = std::polar(1.0, step);
  }
  auto buf = fft_.buffer();
  for (int i = 0; i < steps; ++i) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t b = 0; b < pupil_.size(); ++b) {
      buf[pupil_[b].index] = phase_[b];
      phase_[b] *= phase_step_[b];
    }
    fft_.inverse();
    for (std::size_t k = 0; k < accum_.size(); ++k) accum_[k] += std::norm(buf[k]);
  }
}

Kernel2D PsfModel::crop_accumulated() {
  const int size = optics_.kernel_size_px;
  const int c = size / 2;
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      w[static_cast<std::size_t>(y) * size + x] = accum_[static_cast<std::size_t>(wrap(y - c, grid_)) * grid_ + wrap(x - c, grid_)];
  std::fill(accum_.begin(), accum_.end(), 0.0);
  return Kernel2D::normalized(size, std::move(w));
}

Kernel2D PsfModel::static_psf(double z) {
  if (!std::isfinite(z)) throw DomainError("defocus must be finite");
  std::fill(accum_.begin(), accum_.end(), 0.0);
  accumulate(z, 0.0, 0.0, 0.0, 0.0, 0.0, 1);
  return crop_accumulated();
}

int PsfModel::required_kernel_size(const MotionParams& motion) const {
  const double reach = std::max(std::abs(motion.v1), std::abs(motion.v2)) * optics_.blur_scale_px;
  return 2 * static_cast<int>(std::ceil(reach + in_focus_radius_)) + 1;
}

Kernel2D PsfModel::motion_psf(const MotionParams& motion) { return motion_psf(motion, optics_.time_steps); }

Kernel2D PsfModel::motion_psf(const MotionParams& motion, int time_steps) {
  motion.validate();
  if (time_steps < 1) throw DomainError("time_steps must be >= 1");
  const int needed = required_kernel_size(motion);
  if (needed > optics_.kernel_size_px) {
    std::ostringstream msg;
    msg << "motion (" << motion.v1 << ", " << motion.v2 << ") sweeps outside the " << optics_.kernel_size_px
        << " px kernel window; kernel_size_px must be at least " << needed;
    throw ConfigError(msg.str());
  }
  // Midpoints t_i = (i + 1/2) / T.
  const double dt = 1.0 / time_steps;
  const double t0 = 0.5 * dt;
  const double sx = motion.v1 * optics_.blur_scale_px;
  const double sy = motion.v2 * optics_.blur_scale_px;
  std::fill(accum_.begin(), accum_.end(), 0.0);
  accumulate(motion.z0 + motion.v3 * t0, motion.v3 * dt, sx * t0, sx * dt, sy * t0, sy * dt, time_steps);
  return crop_accumulated();
}

Kernel2D static_psf(const OpticsConfig& optics, double z) { return PsfModel(optics).static_psf(z); }

Kernel2D motion_psf(const OpticsConfig& optics, const MotionParams& motion) {
  return PsfModel(optics).motion_psf(motion);
}

}  // namespace blurflow
