#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blurflow/error.hpp"
#include "blurflow/estimator.hpp"
#include "blurflow/imaging.hpp"
#include "blurflow/psf.hpp"
#include "blurflow/rng.hpp"
#include "blurflow/scene_flow.hpp"
#include "blurflow/texture.hpp"

using namespace blurflow;

namespace {

// Circular convolution of a patch with a centred kernel, evaluated directly.
Plane circular(const Plane& in, const Kernel2D& k) {
  const int h = in.height(), w = in.width(), c = k.center();
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int ky = 0; ky < k.size(); ++ky)
        for (int kx = 0; kx < k.size(); ++kx) {
          const double kw = k.at(ky, kx);
          if (kw == 0.0) continue;
          const int sy = ((y - (ky - c)) % h + h) % h, sx = ((x - (kx - c)) % w + w) % w;
          s += kw * in(sy, sx);
        }
      out(y, x) = s;
    }
  return out;
}

double kernel_l2(const Kernel2D& a, const Kernel2D& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.weights().size(); ++i) s += std::pow(a.weights()[i] - b.weights()[i], 2);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("kernel estimate of an unblurred patch is an impulse") {
  const OpticsConfig o;
  const Plane sharp = synthetic_texture({64, 64}, 1);
  const KernelEstimate k = fit_kernel_nonblind(sharp, sharp, 1e-6, o.kernel_size_px);
  REQUIRE(k.valid);
  CHECK(kernel_l2(k.kernel, Kernel2D::impulse(o.kernel_size_px)) <= 1e-3);
}

TEST_CASE("kernel estimate recovers a circular blur") {
  const OpticsConfig o;
  const Plane sharp = synthetic_texture({128, 128}, 2);
  for (const MotionParams& p : {MotionParams{0.3, 0.3, 0, 0}, MotionParams{0.5, -0.3, 0.2, 0.1}, MotionParams{0, 0.8, 0.5, 0.5}}) {
    const Kernel2D truth = motion_psf(o, p);
    const KernelEstimate k = fit_kernel_nonblind(sharp, circular(sharp, truth), 1e-6, o.kernel_size_px);
    REQUIRE(k.valid);
    CHECK(max_abs_diff(k.kernel, truth) <= 1e-3);
  }
}

TEST_CASE("kernel estimate under noise keeps the centroid") {
  const OpticsConfig o;
  const Kernel2D truth = motion_psf(o, {0.3, 0.3, 0.0, 0.0});
  const auto tm = truth.moments();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Plane sharp = synthetic_texture({128, 128}, seed);
    const Plane noisy = apply_noise(circular(sharp, truth), o, 1000.0, seed);
    const KernelEstimate k = fit_kernel_nonblind(sharp, noisy, 1e-2, o.kernel_size_px);
    REQUIRE(k.valid);
    const auto m = k.kernel.moments();
    CHECK(std::hypot(m.cx - tm.cx, m.cy - tm.cy) < 0.3);
  }
}

TEST_CASE("kernel estimate of flat content is invalid") {
  const Plane flat(64, 64, 0.5);
  const KernelEstimate k = fit_kernel_nonblind(flat, flat, 1e-2, 31);
  CHECK_FALSE(k.valid);
  CHECK(k.kernel.at(15, 15) == 1.0);
  CHECK_THROWS_AS(fit_kernel_nonblind(Plane(60, 64), Plane(60, 64), 1e-2, 31), DomainError);
  CHECK_THROWS_AS(fit_kernel_nonblind(Plane(64, 64), Plane(64, 63), 1e-2, 31), DomainError);
  CHECK_THROWS_AS(fit_kernel_nonblind(Plane(64, 64), Plane(64, 64), 1e-2, 30), DomainError);
}

TEST_CASE("parameter fit of exact kernels") {
  const OpticsConfig o;
  SUBCASE("static in-focus kernel") {
    const ParamFit f = fit_params_to_kernel(static_psf(o, 0.0), o);
    CHECK(f.params == MotionParams{0, 0, 0, 0});
    CHECK(f.residual <= 1e-12);
  }
  SUBCASE("lateral motion") {
    const ParamFit f = fit_params_to_kernel(motion_psf(o, {0.3, 0.3, 0, 0}), o);
    CHECK(std::abs(f.params.v1 - 0.3) <= 0.05);
    CHECK(std::abs(f.params.v2 - 0.3) <= 0.05);
  }
  SUBCASE("random draws round trip") {
    // Each component within 0.05, or an axial confusion that fits at least as well as the truth.
    for (const MotionParams& p : sample_motion_params(50, 17)) {
      const Kernel2D truth = motion_psf(o, p);
      const ParamFit f = fit_params_to_kernel(truth, o);
      CAPTURE(p);
      CAPTURE(f.params);
      CHECK(std::abs(f.params.v1 - p.v1) <= 0.05);
      CHECK(std::abs(f.params.v2 - p.v2) <= 0.05);
      const bool axial_match = std::abs(f.params.v3 - p.v3) <= 0.05 && std::abs(f.params.z0 - p.z0) <= 0.05;
      CHECK((axial_match || f.residual <= 1e-9));
      CHECK(f.residual == doctest::Approx(kernel_l2(motion_psf(o, f.params), truth)));
    }
  }
  SUBCASE("best fit beats a shifted depth") {
    const MotionParams p{0.3, 0.3, 0.8, 0.3};
    const Kernel2D truth = motion_psf(o, p);
    const ParamFit f = fit_params_to_kernel(truth, o);
    MotionParams shifted = p;
    shifted.z0 += 0.3;
    CHECK(f.residual < kernel_l2(motion_psf(o, shifted), truth));
  }
  CHECK_THROWS_AS(fit_params_to_kernel(Kernel2D::impulse(15), o), DomainError);
}

TEST_CASE("nonblind estimate of a flat scene is all invalid") {
  const OpticsConfig o;
  const Plane gray(96, 96, 0.5);
  const EstimationReport r = estimate_field_nonblind(gray, gray, o);
  for (double w : r.pred.w.values()) CHECK(w == 1.0);
  for (double v : r.pred.v1.values()) CHECK(v == 0.0);
  for (const TileResult& t : r.tiles) CHECK_FALSE(t.valid);
}

TEST_CASE("nonblind estimate of a noise-free two-zone scene") {
  const OpticsConfig o;
  const Shape s{64, 128};
  const Plane sharp = synthetic_texture(s, 3);
  const MaskSet masks = split_masks(s, 64);
  const std::vector<MotionParams> params{{0.6, -0.2, 0.1, 0.3}, {-0.3, 0.5, 0.2, 0.6}};
  const Plane blurred = form_image(sharp, masks, params, o);
  TileOptions opt;
  opt.stride = 64;
  const EstimationReport r = estimate_field_nonblind(sharp, blurred, o, opt);
  REQUIRE(r.tiles.size() == 2);
  for (const TileResult& t : r.tiles) {
    const MotionParams& truth = params[t.col / 64];
    REQUIRE(t.valid);
    CHECK(std::abs(t.fit.params.v1 - truth.v1) <= 0.05);
    CHECK(std::abs(t.fit.params.v2 - truth.v2) <= 0.05);
    CHECK(std::abs(t.fit.params.v3 - truth.v3) <= 0.05);
    CHECK(std::abs(t.fit.params.z0 - truth.z0) <= 0.05);
  }
  // Away from the boundary the per-pixel map carries the owning tile's lateral estimate.
  for (int y = 0; y < 64; ++y)
    for (int x : {8, 40, 88, 120}) {
      const MotionParams& truth = params[x / 64];
      CHECK(r.pred.w(y, x) == 0.0);
      CHECK(std::abs(r.pred.v1(y, x) - truth.v1) <= 0.05);
      CHECK(std::abs(r.pred.v2(y, x) - truth.v2) <= 0.05);
      CHECK(std::abs(r.pred.v3(y, x) - truth.v3) <= 0.05);
      CHECK(std::abs(r.pred.z0(y, x) - truth.z0) <= 0.05);
    }
}

TEST_CASE("nonblind estimates reach a high R2 on noise-free single-zone scenes") {
  const OpticsConfig o;
  const Shape s{64, 64};
  std::vector<TargetMaps> preds, gts;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Plane sharp = synthetic_texture(s, 100 + seed);
    const auto params = sample_motion_params(1, seed);
    const MaskSet masks = split_masks(s, 0);
    const std::vector<MotionParams> both{params[0], params[0]};
    const Plane blurred = form_image(sharp, masks, both, o);
    const EstimationReport r = estimate_field_nonblind(sharp, blurred, o);
    preds.push_back(r.pred);
    gts.push_back(make_targets(field_from_masks(masks, both), Plane(s, 0.0)));
  }
  const R2Report r2 = evaluate_r2(std::span<const TargetMaps>(preds), std::span<const TargetMaps>(gts));
  CAPTURE(r2.velocity[0].r2);
  CAPTURE(r2.velocity[1].r2);
  CAPTURE(r2.velocity[2].r2);
  CHECK(r2.velocity_mean >= 0.99);
}

TEST_CASE("nonblind estimate is mirror consistent") {
  const OpticsConfig o;
  const Shape s{64, 64};
  const Plane sharp = synthetic_texture(s, 9);
  const std::vector<MotionParams> p{{0.45, 0.3, 0.2, 0.2}, {0.45, 0.3, 0.2, 0.2}};
  const MaskSet masks = split_masks(s, 0);
  const Plane blurred = form_image(sharp, masks, p, o);
  const EstimationReport a = estimate_field_nonblind(sharp, blurred, o);
  const EstimationReport b = estimate_field_nonblind(sharp.mirrored_horizontal(), blurred.mirrored_horizontal(), o);
  const Plane mirrored = b.pred.v1.mirrored_horizontal();
  for (std::size_t i = 0; i < mirrored.size(); ++i) CHECK(std::abs(mirrored[i] + a.pred.v1[i]) <= 0.05);
}

TEST_CASE("tiling errors") {
  const OpticsConfig o;
  CHECK_THROWS_AS(estimate_field_nonblind(Plane(48, 48), Plane(48, 48), o), DomainError);
  CHECK_THROWS_AS(estimate_field_nonblind(Plane(64, 64), Plane(64, 65), o), DomainError);
  TileOptions opt;
  opt.stride = 80;
  CHECK_THROWS_AS(estimate_field_nonblind(Plane(128, 128), Plane(128, 128), o, opt), DomainError);
  CHECK_THROWS_AS(estimate_field_blind(Plane(48, 48), o), DomainError);
}

TEST_CASE("blind estimate finds the blur orientation") {
  const OpticsConfig o;
  const Shape s{128, 128};
  const Plane sharp = synthetic_texture(s, 11);
  const MaskSet one = split_masks(s, 0);
  SUBCASE("horizontal motion") {
    const std::vector<MotionParams> p{{0.8, 0, 0, 0}, {0.8, 0, 0, 0}};
    const EstimationReport r = estimate_field_blind(form_image(sharp, one, p, o), o);
    for (const TileResult& t : r.tiles) {
      REQUIRE(t.valid);
      const double angle = std::atan2(t.fit.params.v2, t.fit.params.v1);
      // Sign is not observable: fold the direction onto a half-turn.
      const double folded = std::abs(std::remainder(angle, std::numbers::pi));
      CHECK(folded <= 15.0 * std::numbers::pi / 180.0);
    }
  }
  SUBCASE("static scenes") {
    const std::vector<MotionParams> p{{}, {}};
    double total = 0.0;
    int count = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const Plane img = apply_noise(form_image(synthetic_texture(s, 40 + seed), one, p, o), o, 1000.0, seed);
      for (const TileResult& t : estimate_field_blind(img, o).tiles) {
        REQUIRE(t.valid);
        total += std::hypot(t.fit.params.v1, t.fit.params.v2);
        ++count;
      }
    }
    CHECK(total / count < 0.15);
  }
  SUBCASE("flat scene") {
    const EstimationReport r = estimate_field_blind(Plane(s, 0.5), o);
    for (double w : r.pred.w.values()) CHECK(w == 1.0);
  }
}

TEST_CASE("summary json") {
  const OpticsConfig o;
  const Shape s{64, 64};
  const Plane sharp = synthetic_texture(s, 12);
  const MaskSet masks = split_masks(s, 0);
  const std::vector<MotionParams> p{{0.3, 0.1, 0.2, 0.1}, {0.3, 0.1, 0.2, 0.1}};
  EstimationReport r = estimate_field_nonblind(sharp, form_image(sharp, masks, p, o), o);
  CHECK_FALSE(summarize(r).contains("r2"));
  score(r, make_targets(field_from_masks(masks, p), Plane(s, 0.0)));
  REQUIRE(r.r2.has_value());
  CHECK(summarize(r).contains("r2"));
}
