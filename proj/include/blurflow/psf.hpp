#pragma once

#include <complex>
#include <vector>

#include "blurflow/fft.hpp"
#include "blurflow/kernel.hpp"
#include "blurflow/optics.hpp"

namespace blurflow {

// Gaussian amplitude taper exp(-(rho / a)^2) applied inside the circular pupil. Without it the
// hard-edged pupil's Airy tails never concentrate 99% of the energy in a practical kernel.
inline constexpr double kPupilApodization = 0.5;

// Scalar widefield PSF model: circular, apodized pupil with a single Noll Z4 defocus term.
//
// The pupil is sampled on a pad_factor-oversampled odd grid so the spatial origin sits on a
// pixel and every frequency has its mirror image. Lateral displacements are applied as a phase
// ramp on the pupil, so shifted intensities are exact samples rather than interpolations.
//
// Instances keep FFT scratch space and are not safe to share between threads; construct one
// per thread.
class PsfModel {
 public:
  // Validates the optics and throws ConfigError if the kernel window holds less than 99% of
  // the in-focus energy.
  explicit PsfModel(const OpticsConfig& optics);

  const OpticsConfig& optics() const { return optics_; }
  int grid_size() const { return grid_; }
  // Fraction of the in-focus intensity captured by the kernel window.
  double in_focus_energy_fraction() const { return in_focus_fraction_; }
  // Half-width (px) of the smallest centered square holding 99% of the in-focus energy.
  int in_focus_radius_px() const { return in_focus_radius_; }

  // |F^-1[pupil * exp(i dof_scale z Z4)]|^2, cropped to the kernel window, unit sum.
  Kernel2D static_psf(double z);

  // Midpoint-rule time integral of static_psf(z0 + v3 t) displaced by (v1, v2) blur_scale_px t
  // for t in (0, 1). Throws ConfigError when the lateral sweep leaves the kernel window.
  Kernel2D motion_psf(const MotionParams& motion);
  // Same with an explicit number of time steps (>= 1).
  Kernel2D motion_psf(const MotionParams& motion, int time_steps);

  // Smallest odd kernel size able to hold the sweep of this motion.
  int required_kernel_size(const MotionParams& motion) const;

 private:
  struct PupilBin {
    std::size_t index;
    double amplitude;
    double defocus;  // Z4(rho)
    double fx;       // cycles per pixel
    double fy;
  };

  // Accumulates sum_i |field(z0 + dz i, shift0 + dshift i)|^2 for i in [0, steps) into accum_.
  void accumulate(double z_start, double z_step, double x_start, double x_step, double y_start, double y_step,
                  int steps);
  Kernel2D crop_accumulated();

  OpticsConfig optics_;
  int grid_ = 0;
  std::vector<PupilBin> pupil_;
  std::vector<double> accum_;
  std::vector<std::complex<double>> phase_, phase_step_;
  Fft2d fft_;
  double in_focus_fraction_ = 0.0;
  int in_focus_radius_ = 0;
};

// Convenience wrappers that build a throwaway PsfModel.
Kernel2D static_psf(const OpticsConfig& optics, double z);
Kernel2D motion_psf(const OpticsConfig& optics, const MotionParams& motion);

}  // namespace blurflow
