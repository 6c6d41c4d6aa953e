#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "blurflow/imaging.hpp"
#include "blurflow/kernel.hpp"
#include "blurflow/metrics.hpp"
#include "blurflow/optics.hpp"
#include "blurflow/psf.hpp"

namespace blurflow {

// Coarse parameter lattice (uniform over each sampling range) and refinement depth.
struct GridSpec {
  int v1_steps = 9;
  int v2_steps = 9;
  int v3_steps = 5;
  int z0_steps = 5;
  int halving_passes = 2;
  // Number of best coarse points refined independently.
  int starts = 4;
  // Levenberg-Marquardt iterations on the kernel difference after the lattice refinement.
  int polish_iterations = 30;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// motion_psf evaluated on every coarse lattice point of a GridSpec.
class KernelBank {
 public:
  KernelBank(const OpticsConfig& optics, const GridSpec& grid);

  // Process-wide cache keyed by (optics, grid); thread-safe.
  static std::shared_ptr<const KernelBank> shared(const OpticsConfig& optics, const GridSpec& grid);

  const OpticsConfig& optics() const { return optics_; }
  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return params_.size(); }
  const MotionParams& params(std::size_t i) const { return params_[i]; }
  const Kernel2D& kernel(std::size_t i) const { return kernels_[i]; }
  // Lattice spacing for (v1, v2, v3, z0).
  std::array<double, 4> step() const { return step_; }

 private:
  OpticsConfig optics_;
  GridSpec grid_;
  std::array<double, 4> step_{};
  std::vector<MotionParams> params_;
  std::vector<Kernel2D> kernels_;
};

struct KernelEstimate {
  Kernel2D kernel = Kernel2D::impulse(1);
  // False when the sharp patch has no usable spectrum (flat content); kernel is then an impulse.
  bool valid = false;
};

// Wiener estimate of the kernel relating two same-shaped patches under circular convolution:
// F^-1[F(blurred) conj(F(sharp)) / (|F(sharp)|^2 + reg * P)], where P is the mean non-DC power of
// the sharp patch, cropped to kernel_size around the origin, clamped and renormalized. Before
// clamping, weights below three times the RMS of the negative weights are zeroed as noise.
// Requires both patch sides to be at least twice kernel_size.
KernelEstimate fit_kernel_nonblind(const ImagePlane& sharp_patch, const ImagePlane& blurred_patch, double reg,
                                   int kernel_size);

struct ParamFit {
  MotionParams params;
  double residual = 0.0;
};

// Coarse lattice scan by L2 kernel distance followed by halving_passes local refinements.
// Ties go to the smaller |v|, then the smaller z0.
ParamFit fit_params_to_kernel(const Kernel2D& kernel, const OpticsConfig& optics, const GridSpec& grid = {});
ParamFit fit_params_to_kernel(const Kernel2D& kernel, const KernelBank& bank, PsfModel& model);

struct TileOptions {
  int patch = 64;
  int stride = 32;
  // Tikhonov weight of the per-tile kernel estimate, relative to the sharp texture energy.
  double kernel_reg = 1e-2;
  int cg_iterations = 30;
  // Levenberg-Marquardt iterations refining each tile's parameters against the tile pixels.
  int refine_iterations = 30;
  // Best points of the (v3, z0) lattice scan, at the lateral kernel-fit velocity, refined.
  int refine_starts = 2;
  // Refits that exclude pixels whose local prediction error is far above the tile's median.
  int robust_rounds = 2;
  // Time steps of the kernels used in the image-space refinement; 0 keeps optics.time_steps.
  int time_steps = 12;
  // Side of the (v3, z0) lattice over which the posterior mean is taken; < 2 keeps the minimizer.
  int posterior_steps = 11;
  // The kernel fit only seeds the refinement, so it skips multi-start and polishing.
  GridSpec grid{.starts = 1, .polish_iterations = 0};
};

struct TileResult {
  int row = 0;  // top-left corner
  int col = 0;
  bool valid = false;
  ParamFit fit;
};

struct EstimationReport {
  TargetMaps pred;
  Plane residual_map;  // fit residual of the tile that owns each pixel
  std::vector<TileResult> tiles;
  std::optional<R2Report> r2;  // filled by score()
};

// Non-blind estimation with the sharp frame as reference. Per tile: a least-squares kernel
// estimate over the exact (untruncated) support, fit_params_to_kernel for a starting point, then
// refinement of the parameters against the tile pixels under a free gain and offset (sensor
// scaling and dark level). The reported (v3, z0) is the posterior mean over an axial lattice,
// with the residual at the minimum setting the noise level, since the two trade off against each
// other. Each pixel takes the covering tile that predicts its neighbourhood best. Flat tiles are invalid; pixels with no valid tile get w = 1 and zero motion.
EstimationReport estimate_field_nonblind(const ImagePlane& sharp, const ImagePlane& blurred, const OpticsConfig& optics,
                                         const TileOptions& options = {});

// Blind, heuristic estimation: per tile, the log power spectrum is matched against candidate
// |OTF|^2 after removing a radially symmetric texture spectrum. The lateral speed is then shrunk
// along the fitted direction to the smallest value within one standard error of the best cost,
// which biases real motion slightly low. The lateral sign is not observable this way, and axial
// parameters are weakly determined.
EstimationReport estimate_field_blind(const ImagePlane& blurred, const OpticsConfig& optics,
                                      const TileOptions& options = {});

// Fills report.r2 against ground truth.
void score(EstimationReport& report, const TargetMaps& gt);

// Summary with residual statistics and, when scored, the R2 report.
nlohmann::json summarize(const EstimationReport& report);

}  // namespace blurflow
