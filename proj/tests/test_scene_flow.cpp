#include <doctest.h>

#include <cmath>

#include "blurflow/error.hpp"
#include "blurflow/rng.hpp"
#include "blurflow/scene_flow.hpp"
#include "blurflow/texture.hpp"

using namespace blurflow;

namespace {

void check_partition(const MaskSet& m) {
  Plane sum(m.shape());
  for (int n = 0; n < m.count(); ++n) sum += m.mask(n);
  for (double v : sum.values()) REQUIRE(v == 1.0);
}

}  // namespace

TEST_CASE("one mask covers the frame") {
  const MaskSet m = generate_masks({64, 64}, 1, 99);
  check_partition(m);
  CHECK(m.area(0) == 64u * 64u);
}

TEST_CASE("voronoi masks partition the frame") {
  const MaskSet m = generate_masks({64, 64}, 4, 7);
  check_partition(m);
  for (int n = 0; n < 4; ++n) CHECK(m.area(n) > 0);
  CHECK(generate_masks({64, 64}, 4, 7) == m);
  CHECK_FALSE(generate_masks({64, 64}, 4, 8) == m);
  check_partition(generate_masks({40, 70}, 9, 3));
}

TEST_CASE("voronoi cells are nearest-seed regions") {
  // Cells are convex: every row intersects a cell in one contiguous run.
  const MaskSet m = generate_masks({48, 48}, 5, 21);
  for (int y = 0; y < 48; ++y)
    for (int n = 0; n < 5; ++n) {
      int runs = 0;
      for (int x = 0; x < 48; ++x) runs += m.label(y, x) == n && (x == 0 || m.label(y, x - 1) != n);
      CHECK(runs <= 1);
    }
}

TEST_CASE("mask generation errors") {
  CHECK_THROWS_AS(generate_masks({64, 64}, 0, 1), DomainError);
  CHECK_THROWS_AS(generate_masks({8, 64}, 2, 1), DomainError);
  CHECK_THROWS_AS(generate_masks({16, 16}, 257, 1), DomainError);
  CHECK_THROWS_AS(MaskSet({2, 2}, 2, {0, 1, 2, 0}), DomainError);
}

TEST_CASE("split masks") {
  const MaskSet m = split_masks({10, 12}, 5);
  CHECK(m.count() == 2);
  CHECK(m.label(3, 4) == 0);
  CHECK(m.label(3, 5) == 1);
  CHECK(m.area(0) == 50u);
}

TEST_CASE("motion parameter sampling") {
  const auto a = sample_motion_params(10000, 5);
  double m1 = 0, m2 = 0, m3 = 0;
  for (const auto& p : a) {
    CHECK_NOTHROW(p.validate());
    m1 += p.v1;
    m2 += p.v2;
    m3 += p.v3;
  }
  CHECK(std::abs(m1 / 1e4) <= 0.03);
  CHECK(std::abs(m2 / 1e4) <= 0.03);
  CHECK(std::abs(m3 / 1e4 - 0.5) <= 0.015);
  CHECK(sample_motion_params(10000, 5) == a);
  CHECK_THROWS_AS(sample_motion_params(0, 5), DomainError);
}

TEST_CASE("sampled ranges hold over many draws") {
  for (const auto& p : sample_motion_params(100000, 6)) {
    REQUIRE(p.v1 >= -1.0);
    REQUIRE(p.v1 <= 1.0);
    REQUIRE(p.v2 >= -1.0);
    REQUIRE(p.v2 <= 1.0);
    REQUIRE(p.v3 >= 0.0);
    REQUIRE(p.v3 <= 1.0);
    REQUIRE(p.z0 >= 0.0);
    REQUIRE(p.z0 <= 1.0);
  }
}

TEST_CASE("cylinder flow") {
  const double vmax = 0.7;
  const VelocityField f = cylinder_flow_field({33, 20}, vmax);
  CHECK(f.v2(32, 5) == doctest::Approx(vmax));
  CHECK(f.v3(32, 5) == doctest::Approx(0.0));
  CHECK(f.v2(0, 5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.v3(0, 5) == doctest::Approx(vmax));
  for (int y = 0; y < 33; ++y)
    for (int x = 0; x < 20; ++x) {
      CHECK(std::hypot(f.v2(y, x), f.v3(y, x)) == doctest::Approx(vmax).epsilon(1e-12));
      CHECK(f.v1(y, x) == 0.0);
      CHECK(f.z0(y, x) == 0.0);
    }
  // Moving up the frame (decreasing row): v3 never decreases, v2 never increases.
  for (int y = 0; y + 1 < 33; ++y) {
    CHECK(f.v3(y, 0) >= f.v3(y + 1, 0));
    CHECK(f.v2(y, 0) <= f.v2(y + 1, 0));
  }
  CHECK_NOTHROW(f.validate());
  CHECK_THROWS_AS(cylinder_flow_field({8, 8}, 0.0), DomainError);
  CHECK_THROWS_AS(cylinder_flow_field({8, 8}, 1.5), DomainError);
}

TEST_CASE("field from masks") {
  const MaskSet m = generate_masks({32, 32}, 3, 4);
  const auto params = sample_motion_params(3, 9);
  const VelocityField f = field_from_masks(m, params);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(f.at(y, x) == params[m.label(y, x)]);
  CHECK_THROWS_AS(field_from_masks(m, std::vector<MotionParams>(2)), DomainError);
}

TEST_CASE("counter rng") {
  CounterRng a(3), b(3), c(4);
  for (int i = 0; i < 10; ++i) {
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
  }
  CHECK(derive_key(1, 2) != derive_key(2, 1));
  CounterRng u(12);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("synthetic texture") {
  const Plane t = synthetic_texture({48, 64}, 5);
  CHECK(t.shape() == Shape{48, 64});
  CHECK(t.min() >= 0.05 - 1e-12);
  CHECK(t.max() <= 0.95 + 1e-12);
  CHECK(t.max() - t.min() > 0.3);
  CHECK(synthetic_texture({48, 64}, 5) == t);
  CHECK_FALSE(synthetic_texture({48, 64}, 6) == t);
}
