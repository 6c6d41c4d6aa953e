#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blurflow/error.hpp"
#include "blurflow/imaging.hpp"
#include "blurflow/psf.hpp"
#include "blurflow/rng.hpp"
#include "blurflow/texture.hpp"

using namespace blurflow;

namespace {

// Direct zero-padded convolution of the whole frame with one kernel.
Plane convolve(const Plane& in, const Kernel2D& k) {
  const int h = in.height(), w = in.width(), c = k.center();
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int ky = 0; ky < k.size(); ++ky)
        for (int kx = 0; kx < k.size(); ++kx) {
          const int sy = y - (ky - c), sx = x - (kx - c);
          if (sy >= 0 && sy < h && sx >= 0 && sx < w) s += k.at(ky, kx) * in(sy, sx);
        }
      out(y, x) = s;
    }
  return out;
}

Plane white_noise(Shape s, std::uint64_t seed) {
  Plane p(s);
  CounterRng rng(seed);
  for (double& v : p.values()) v = rng.uniform();
  return p;
}

}  // namespace

TEST_CASE("static single region equals in-focus convolution") {
  const OpticsConfig o;
  const Plane sharp = synthetic_texture({48, 48}, 1);
  const MaskSet one = split_masks({48, 48}, 0);  // every pixel in region 1
  const std::vector<MotionParams> params{{}, {}};
  CHECK(max_abs_diff(form_image(sharp, one, params, o), convolve(sharp, static_psf(o, 0.0))) <= 1e-9);
}

TEST_CASE("image formation is linear before noise") {
  const OpticsConfig o;
  const Shape s{64, 64};
  const Plane sharp = synthetic_texture(s, 2);
  const MaskSet masks = generate_masks(s, 3, 2);
  const auto params = sample_motion_params(3, 2);
  Plane scaled = sharp;
  scaled *= 0.37;
  Plane expected = form_image(sharp, masks, params, o);
  expected *= 0.37;
  CHECK(max_abs_diff(form_image(scaled, masks, params, o), expected) <= 1e-9);
}

TEST_CASE("image formation conserves interior intensity") {
  const OpticsConfig o;
  const Shape s{96, 96};
  Plane sharp(s);
  const Plane tex = synthetic_texture(s, 3);
  for (int y = 24; y < 72; ++y)
    for (int x = 24; x < 72; ++x) sharp(y, x) = tex(y, x);
  const auto params = sample_motion_params(2, 3);
  const Plane out = form_image(sharp, generate_masks(s, 2, 3), params, o);
  CHECK(std::abs(out.sum() - sharp.sum()) / sharp.sum() < 1e-3);
  CHECK(out.min() >= 0.0);
}

TEST_CASE("field and mask forms agree") {
  const OpticsConfig o;
  const Shape s{40, 40};
  const Plane sharp = synthetic_texture(s, 4);
  const MaskSet masks = generate_masks(s, 3, 4);
  const auto params = sample_motion_params(3, 4);
  CHECK(max_abs_diff(form_image(sharp, masks, params, o), form_image(sharp, field_from_masks(masks, params), o)) <= 1e-12);
}

TEST_CASE("image formation errors") {
  const OpticsConfig o;
  const MaskSet masks = generate_masks({32, 32}, 2, 1);
  CHECK_THROWS_AS(form_image(Plane(32, 31), masks, sample_motion_params(2, 1), o), DomainError);
  CHECK_THROWS_AS(form_image(Plane(32, 32), masks, sample_motion_params(3, 1), o), DomainError);
}

TEST_CASE("noise without quantum efficiency is half-normal background") {
  OpticsConfig o;
  o.quantum_efficiency_beta = 0.0;
  o.gaussian_sigma = 0.05;
  const Plane noisy = apply_noise(Plane(300, 300, 0.6), o, 1000.0, 3);
  const double n = static_cast<double>(noisy.size());
  const double expected = 0.05 * std::sqrt(2.0 / std::numbers::pi);
  const double se = 0.05 * std::sqrt(1.0 - 2.0 / std::numbers::pi) / std::sqrt(n);
  CHECK(std::abs(noisy.mean() - expected) <= 3 * se);
  CHECK(noisy.min() >= 0.0);
}

TEST_CASE("noise variance") {
  OpticsConfig o;
  o.quantum_efficiency_beta = 0.9;
  o.gaussian_sigma = 0.02;
  const Plane noisy = apply_noise(Plane(400, 400, 0.5), o, 1000.0, 4);
  double var = 0.0;
  const double mean = noisy.mean();
  for (double v : noisy.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(noisy.size() - 1);
  const double expected = 0.81 * 0.5 / 1000.0 + 0.02 * 0.02 * (1.0 - 2.0 / std::numbers::pi);
  CHECK(var == doctest::Approx(expected).epsilon(0.03));
}

TEST_CASE("noise determinism") {
  OpticsConfig o;
  o.gaussian_sigma = 0.0;
  const Plane clean = synthetic_texture({32, 32}, 5);
  CHECK(apply_noise(clean, o, 1000.0, 9) == apply_noise(clean, o, 1000.0, 9));
  CHECK_FALSE(apply_noise(clean, o, 1000.0, 9) == apply_noise(clean, o, 1000.0, 10));
  CHECK_THROWS_AS(apply_noise(clean, o, 0.0, 9), DomainError);
  CHECK(apply_noise(clean, OpticsConfig{}, 1000.0, 9).min() >= 0.0);
}

TEST_CASE("validity of a constant image") {
  const Plane w = validity_map(Plane(40, 40, 0.3));
  for (double v : w.values()) CHECK(v == 1.0);
}

TEST_CASE("validity of a checkerboard") {
  // 8 px squares: most Laplacian values are zero (noise estimate 0) while every 15 px window
  // straddles an edge. With 4 px squares three quarters of the pixels sit on an edge and the
  // edges themselves inflate the noise estimate above the local contrast.
  Plane board(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) board(y, x) = ((y / 8 + x / 8) % 2) ? 0.9 : 0.1;
  const Plane w = validity_map(board);
  for (int y = 7; y < 57; ++y)
    for (int x = 7; x < 57; ++x) CHECK(w(y, x) == 0.0);
}

TEST_CASE("validity of a half-flat image") {
  Plane img(64, 64, 0.4);
  const Plane tex = white_noise({64, 64}, 6);
  for (int y = 0; y < 64; ++y)
    for (int x = 32; x < 64; ++x) img(y, x) = tex(y, x);
  const Plane w = validity_map(img);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 32 - 8; ++x) CHECK(w(y, x) == 1.0);
    for (int x = 32 + 8; x < 64; ++x) CHECK(w(y, x) == 0.0);
  }
}

TEST_CASE("validity flags flat noise and keeps texture") {
  OpticsConfig o;
  const Plane flat = apply_noise(Plane(64, 64, 0.5), o, 1000.0, 7);
  std::size_t valid = 0;
  for (double v : validity_map(flat).values()) valid += v == 0.0;
  CHECK(valid < 64 * 64 / 20);

  const Plane tex = apply_noise(form_image(synthetic_texture({64, 64}, 7), split_masks({64, 64}, 32),
                                           sample_motion_params(2, 7), o),
                                o, 1000.0, 7);
  valid = 0;
  for (double v : validity_map(tex).values()) valid += v == 0.0;
  CHECK(valid > 64 * 64 * 8 / 10);
}

TEST_CASE("validity is invariant to affine intensity changes") {
  const Plane img = apply_noise(synthetic_texture({64, 64}, 8), OpticsConfig{}, 200.0, 8);
  const Plane w = validity_map(img);
  Plane t = img;
  t *= 2.5;
  t += 0.1;
  CHECK(validity_map(t) == w);
}

TEST_CASE("validity argument checks") {
  CHECK_THROWS_AS(validity_map(Plane(8, 8), 4), DomainError);
  CHECK_THROWS_AS(validity_map(Plane(8, 8), 1), DomainError);
  CHECK_THROWS_AS(validity_map(Plane(8, 8), 5, -1.0), DomainError);
}

TEST_CASE("targets from a field") {
  const VelocityField f = cylinder_flow_field({16, 16}, 0.5);
  const Plane w(16, 16, 0.0);
  const TargetMaps t = make_targets(f, w);
  CHECK(t.v3 == f.v3);
  CHECK(t.w == w);
  CHECK_THROWS_AS(make_targets(f, Plane(8, 8)), DomainError);
  TargetMaps bad = t;
  bad.z0 = Plane(3, 3);
  CHECK_THROWS_AS(bad.check_shape(), DomainError);
}
