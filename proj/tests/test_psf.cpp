#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blurflow/error.hpp"
#include "blurflow/fft.hpp"
#include "blurflow/kernel.hpp"
#include "blurflow/optics.hpp"
#include "blurflow/psf.hpp"
#include "blurflow/scene_flow.hpp"
#include "blurflow/zernike.hpp"

using namespace blurflow;

TEST_CASE("zernike values") {
  CHECK(zernike(1, 0.7, 1.2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(zernike(4, 1.0, 0.3) == doctest::Approx(1.7320508).epsilon(1e-7));
  CHECK(std::abs(zernike(4, 1.0 / std::sqrt(2.0), 2.0)) < 1e-12);
  // Tip and spherical, written out by hand.
  CHECK(zernike(2, 0.6, 0.4) == doctest::Approx(2.0 * 0.6 * std::cos(0.4)));
  CHECK(zernike(3, 0.6, 0.4) == doctest::Approx(2.0 * 0.6 * std::sin(0.4)));
  const double r = 0.8;
  CHECK(zernike(11, r, 0.0) == doctest::Approx(std::sqrt(5.0) * (6 * std::pow(r, 4) - 6 * r * r + 1)));
}

TEST_CASE("noll ordering") {
  const int expected[][2] = {{0, 0}, {1, 1}, {1, -1}, {2, 0}, {2, -2}, {2, 2}, {3, -1}, {3, 1}, {3, -3}, {3, 3}, {4, 0}};
  for (int j = 1; j <= 11; ++j) {
    const ZernikeOrder o = noll_to_order(j);
    CHECK(o.n == expected[j - 1][0]);
    CHECK(o.m == expected[j - 1][1]);
  }
}

TEST_CASE("zernike domain errors") {
  CHECK_THROWS_AS(zernike(0, 0.5, 0.0), DomainError);
  CHECK_THROWS_AS(zernike(4, 1.01, 0.0), DomainError);
  CHECK_THROWS_AS(zernike(4, -0.1, 0.0), DomainError);
}

TEST_CASE("in-focus psf peaks at the centre") {
  PsfModel model{OpticsConfig{}};
  const Kernel2D k = model.static_psf(0.0);
  const int c = k.center();
  for (int y = 0; y < k.size(); ++y)
    for (int x = 0; x < k.size(); ++x)
      if (y != c || x != c) CHECK(k.at(y, x) < k.at(c, c));
  CHECK(model.in_focus_energy_fraction() >= 0.99);
}

TEST_CASE("defocus widens the psf symmetrically in z") {
  PsfModel model{OpticsConfig{}};
  CHECK(model.static_psf(0.5).moments().second > model.static_psf(0.0).moments().second);
  CHECK(max_abs_diff(model.static_psf(0.5), model.static_psf(-0.5)) <= 1e-9);
}

TEST_CASE("default dof_scale doubles the second moment at z = 1") {
  PsfModel model{OpticsConfig{}};
  const double ratio = model.static_psf(1.0).moments().second / model.static_psf(0.0).moments().second;
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("motion psf without motion is the static psf") {
  PsfModel model{OpticsConfig{}};
  CHECK(max_abs_diff(model.motion_psf({0, 0, 0, 0}), model.static_psf(0.0)) <= 1e-9);
  CHECK(max_abs_diff(model.motion_psf({0, 0, 0, 0.4}), model.static_psf(0.4)) <= 1e-9);
}

TEST_CASE("lateral sweep centroid") {
  PsfModel model{OpticsConfig{}};
  for (int steps : {32, 1024}) {
    const auto m = model.motion_psf({0.3, 0.3, 0.0, 0.0}, steps).moments();
    CHECK(std::abs(m.cx - 1.2) <= 0.05);
    CHECK(std::abs(m.cy - 1.2) <= 0.05);
  }
  // Within 0.5 / sqrt(T) on a 5x5 grid.
  const double bound = 0.5 / std::sqrt(32.0);
  for (double v1 : {-1.0, -0.5, 0.0, 0.5, 1.0})
    for (double v2 : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
      const auto m = model.motion_psf({v1, v2, 0.0, 0.0}).moments();
      CHECK(std::abs(m.cx - 4.0 * v1) <= bound);
      CHECK(std::abs(m.cy - 4.0 * v2) <= bound);
    }
}

TEST_CASE("axial sweep widens the psf monotonically") {
  PsfModel model{OpticsConfig{}};
  const double a = model.motion_psf({0, 0, 0.2, 0}).moments().second;
  const double b = model.motion_psf({0, 0, 0.5, 0}).moments().second;
  const double c = model.motion_psf({0, 0, 0.8, 0}).moments().second;
  CHECK(a < b);
  CHECK(b < c);
}

TEST_CASE("motion psf laws over random draws") {
  PsfModel model{OpticsConfig{}};
  for (const MotionParams& p : sample_motion_params(30, 11)) {
    const Kernel2D k = model.motion_psf(p);
    double sum = 0.0;
    for (double w : k.weights()) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
    CHECK(max_abs_diff(model.motion_psf({-p.v1, p.v2, p.v3, p.z0}), k.mirrored_horizontal()) <= 1e-9);
    CHECK(max_abs_diff(model.motion_psf(p, 32), model.motion_psf(p, 128)) <= 1e-3);
  }
}

TEST_CASE("wrapper functions agree with the model") {
  const OpticsConfig o;
  PsfModel model(o);
  CHECK(max_abs_diff(motion_psf(o, {0.2, -0.4, 0.3, 0.1}), model.motion_psf({0.2, -0.4, 0.3, 0.1})) == 0.0);
  CHECK(max_abs_diff(static_psf(o, 0.3), model.static_psf(0.3)) == 0.0);
}

TEST_CASE("kernel window too small for the in-focus spot") {
  OpticsConfig o;
  o.kernel_size_px = 3;
  CHECK_THROWS_AS(PsfModel{o}, ConfigError);
}

TEST_CASE("lateral sweep leaving the kernel window") {
  OpticsConfig o;
  o.kernel_size_px = 15;
  PsfModel model(o);
  CHECK_NOTHROW(model.motion_psf({0.1, 0.1, 0, 0}));
  try {
    model.motion_psf({1.0, 1.0, 0, 0});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("kernel_size_px must be at least") != std::string::npos);
  }
}

TEST_CASE("invalid motion and step counts") {
  PsfModel model{OpticsConfig{}};
  CHECK_THROWS_AS(model.motion_psf({1.5, 0, 0, 0}), DomainError);
  CHECK_THROWS_AS(model.motion_psf({0, 0, -0.1, 0}), DomainError);
  CHECK_THROWS_AS(model.motion_psf({0, 0, 0, 0}, 0), DomainError);
  CHECK_THROWS_AS(model.static_psf(std::nan("")), DomainError);
}

TEST_CASE("optics validation and json") {
  OpticsConfig o;
  CHECK_NOTHROW(o.validate());
  o.kernel_size_px = 30;
  CHECK_THROWS_AS(o.validate(), ConfigError);
  o = {};
  o.quantum_efficiency_beta = 1.5;
  CHECK_THROWS_AS(o.validate(), ConfigError);
  o = {};
  o.pad_factor = 1;
  CHECK_THROWS_AS(o.validate(), ConfigError);

  OpticsConfig custom;
  custom.numerical_aperture = 0.45;
  custom.time_steps = 16;
  const nlohmann::json j = custom;
  CHECK(j.get<OpticsConfig>() == custom);
  CHECK(j.size() == 11);

  nlohmann::json bad = custom;
  bad["magnification"] = 10;
  CHECK_THROWS_AS(bad.get<OpticsConfig>(), ConfigError);
  CHECK(nlohmann::json::object().get<OpticsConfig>() == OpticsConfig{});
}

TEST_CASE("kernel construction") {
  CHECK_THROWS_AS(Kernel2D::normalized(4, std::vector<double>(16, 1.0)), DomainError);
  CHECK_THROWS_AS(Kernel2D::normalized(3, std::vector<double>(8, 1.0)), DomainError);
  CHECK_THROWS_AS(Kernel2D::normalized(3, std::vector<double>(9, -1.0)), DomainError);
  const Kernel2D k = Kernel2D::normalized(3, {0, 0, 0, -1, 2, 0, 0, 2, 0});
  CHECK(k.at(1, 0) == 0.0);
  CHECK(k.at(1, 1) == doctest::Approx(0.5));
  CHECK(k.moments().cy == doctest::Approx(0.5));
  CHECK(Kernel2D::impulse(5).at(2, 2) == 1.0);
}

TEST_CASE("fft round trip") {
  Fft2d fft(6, 10);
  auto buf = fft.buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = {std::sin(0.3 * i), std::cos(0.7 * i)};
  const std::vector<std::complex<double>> orig(buf.begin(), buf.end());
  fft.forward();
  fft.inverse();
  for (std::size_t i = 0; i < buf.size(); ++i) CHECK(std::abs(buf[i] - orig[i]) < 1e-12);
}

TEST_CASE("fft friendly sizes") {
  CHECK(fft_friendly_size(94) == 96);
  CHECK(fft_friendly_size(97) == 98);
  CHECK(fft_friendly_size(11) == 12);
  CHECK(fft_friendly_size(64) == 64);
}
