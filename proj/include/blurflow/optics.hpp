#pragma once

#include <string>

#include <json.hpp>

namespace blurflow {

// Optical and sensor constants shared by PSF generation, image formation and noise.
//
// Velocities are dimensionless: a lateral speed of 1 sweeps blur_scale_px pixels over one
// exposure, and an axial displacement of 1 applies dof_scale radians of Noll-normalized
// defocus. exposure_dt is therefore pinned to 1.
struct OpticsConfig {
  double numerical_aperture = 0.3;
  double wavelength_um = 0.55;
  double pixel_pitch_um = 0.65;  // object-space sampling
  int kernel_size_px = 31;
  int pad_factor = 2;
  double exposure_dt = 1.0;
  double blur_scale_px = 8.0;
  double dof_scale = 1.16;  // z = 1 doubles the in-focus second moment
  int time_steps = 32;
  double quantum_efficiency_beta = 0.9;
  double gaussian_sigma = 0.01;

  // Throws ConfigError naming the first offending field.
  void validate() const;

  friend bool operator==(const OpticsConfig&, const OpticsConfig&) = default;
};

// One region's latent motion: lateral (v1 along columns, v2 along rows), axial v3, and the
// axial start position z0 (0 = in focus).
struct MotionParams {
  double v1 = 0.0;
  double v2 = 0.0;
  double v3 = 0.0;
  double z0 = 0.0;

  // Throws DomainError if a component leaves its sampling range.
  void validate() const;

  friend bool operator==(const MotionParams&, const MotionParams&) = default;
};

void to_json(nlohmann::json& j, const OpticsConfig& o);
// Rejects unknown keys; absent keys keep their defaults.
void from_json(const nlohmann::json& j, OpticsConfig& o);

void to_json(nlohmann::json& j, const MotionParams& p);
void from_json(const nlohmann::json& j, MotionParams& p);

OpticsConfig load_optics(const std::string& path);
void save_optics(const std::string& path, const OpticsConfig& optics);

}  // namespace blurflow
