#pragma once

#include <cstdint>
#include <span>

#include "blurflow/kernel.hpp"
#include "blurflow/optics.hpp"
#include "blurflow/plane.hpp"
#include "blurflow/scene_flow.hpp"

namespace blurflow {

// Intensity images are plain Planes with non-negative, finite values (nominally [0, 1]).
using ImagePlane = Plane;

// Per-pixel ground truth or prediction. w = 0 marks a textured (valid) pixel whose motion
// terms count in the loss; w = 1 marks an uninformative one.
struct TargetMaps {
  Plane v1, v2, v3, z0, w;

  Shape shape() const { return v1.shape(); }
  // Throws DomainError if the five planes disagree in shape.
  void check_shape() const;
};

TargetMaps make_targets(const VelocityField& field, const Plane& validity);

// Sum over regions of (mask_n * sharp) convolved with kernels[n]. Linear (zero-padded)
// convolution cropped back to the frame; negative round-off is clamped to zero.
ImagePlane synthesize(const ImagePlane& sharp, const MaskSet& masks, std::span<const Kernel2D> kernels);

// Spatially-variant motion blur with one motion PSF per region.
ImagePlane form_image(const ImagePlane& sharp, const MaskSet& masks, std::span<const MotionParams> params,
                      const OpticsConfig& optics);

// Same for a per-pixel field: pixels sharing identical parameters form one region.
ImagePlane form_image(const ImagePlane& sharp, const VelocityField& field, const OpticsConfig& optics);

// beta * Poisson(photon_scale * clean) / photon_scale + |N(0, gaussian_sigma^2)|, drawn per pixel
// from a stream keyed on (seed, pixel index).
ImagePlane apply_noise(const ImagePlane& clean, const OpticsConfig& optics, double photon_scale, std::uint64_t seed);

inline constexpr int kDefaultValidityWindow = 15;
inline constexpr double kDefaultValidityTau = 2.0;

// 0 where the local standard deviation over a window x window neighbourhood (clipped at the
// frame) exceeds tau * 1.4826 * MAD(Laplacian of the image) / sqrt(20); 1 elsewhere. The
// sqrt(20) is the noise gain of the 4-neighbour Laplacian.
Plane validity_map(const ImagePlane& image, int window = kDefaultValidityWindow, double tau = kDefaultValidityTau);

}  // namespace blurflow
