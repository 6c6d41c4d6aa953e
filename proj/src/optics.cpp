#include "blurflow/optics.hpp"

#include <cmath>
#include <fstream>

#include "blurflow/error.hpp"

namespace blurflow {
namespace {

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw ConfigError(std::string("optics.") + field + " " + rule);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void OpticsConfig::validate() const {
  require(positive(numerical_aperture) && numerical_aperture <= 1.5, "numerical_aperture", "must lie in (0, 1.5]");
  require(positive(wavelength_um), "wavelength_um", "must be > 0");
  require(positive(pixel_pitch_um), "pixel_pitch_um", "must be > 0");
  require(kernel_size_px > 0 && kernel_size_px % 2 == 1, "kernel_size_px", "must be an odd positive integer");
  require(pad_factor >= 2, "pad_factor", "must be >= 2");
  require(exposure_dt == 1.0, "exposure_dt", "is fixed to 1.0");
  require(positive(blur_scale_px), "blur_scale_px", "must be > 0");
  require(positive(dof_scale), "dof_scale", "must be > 0");
  require(time_steps >= 2, "time_steps", "must be >= 2");
  require(std::isfinite(quantum_efficiency_beta) && quantum_efficiency_beta >= 0.0 && quantum_efficiency_beta <= 1.0,
          "quantum_efficiency_beta", "must lie in [0, 1]");
  require(std::isfinite(gaussian_sigma) && gaussian_sigma >= 0.0, "gaussian_sigma", "must be >= 0");
}

void MotionParams::validate() const {
  auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  if (!in(v1, -1.0, 1.0) || !in(v2, -1.0, 1.0)) throw DomainError("lateral velocity components must lie in [-1, 1]");
  if (!in(v3, 0.0, 1.0)) throw DomainError("axial velocity v3 must lie in [0, 1]");
  if (!in(z0, 0.0, 1.0)) throw DomainError("axial start z0 must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const OpticsConfig& o) {
  j = nlohmann::json{{"numerical_aperture", o.numerical_aperture},
                     {"wavelength_um", o.wavelength_um},
                     {"pixel_pitch_um", o.pixel_pitch_um},
                     {"kernel_size_px", o.kernel_size_px},
                     {"pad_factor", o.pad_factor},
                     {"exposure_dt", o.exposure_dt},
                     {"blur_scale_px", o.blur_scale_px},
                     {"dof_scale", o.dof_scale},
                     {"time_steps", o.time_steps},
                     {"quantum_efficiency_beta", o.quantum_efficiency_beta},
                     {"gaussian_sigma", o.gaussian_sigma}};
}

void from_json(const nlohmann::json& j, OpticsConfig& o) {
  if (!j.is_object()) throw ConfigError("optics document must be a JSON object");
  OpticsConfig out;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "numerical_aperture") out.numerical_aperture = value.get<double>();
      else if (key == "wavelength_um") out.wavelength_um = value.get<double>();
      else if (key == "pixel_pitch_um") out.pixel_pitch_um = value.get<double>();
      else if (key == "kernel_size_px") out.kernel_size_px = value.get<int>();
      else if (key == "pad_factor") out.pad_factor = value.get<int>();
      else if (key == "exposure_dt") out.exposure_dt = value.get<double>();
      else if (key == "blur_scale_px") out.blur_scale_px = value.get<double>();
      else if (key == "dof_scale") out.dof_scale = value.get<double>();
      else if (key == "time_steps") out.time_steps = value.get<int>();
      else if (key == "quantum_efficiency_beta") out.quantum_efficiency_beta = value.get<double>();
      else if (key == "gaussian_sigma") out.gaussian_sigma = value.get<double>();
      else throw ConfigError("unknown optics key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("optics key '" + key + "': " + e.what());
    }
  }
  out.validate();
  o = out;
}

void to_json(nlohmann::json& j, const MotionParams& p) {
  j = nlohmann::json{{"v1", p.v1}, {"v2", p.v2}, {"v3", p.v3}, {"z0", p.z0}};
}

void from_json(const nlohmann::json& j, MotionParams& p) {
  p.v1 = j.at("v1").get<double>();
  p.v2 = j.at("v2").get<double>();
  p.v3 = j.at("v3").get<double>();
  p.z0 = j.at("z0").get<double>();
}

OpticsConfig load_optics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open optics file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("optics file " + path + " is not valid JSON: " + e.what());
  }
  return j.get<OpticsConfig>();
}

void save_optics(const std::string& path, const OpticsConfig& optics) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write optics file " + path);
  out << nlohmann::json(optics).dump(2) << '\n';
}

}  // namespace blurflow
