#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tw/errors.hpp"
#include "tw/random.hpp"
#include "tw/warp.hpp"

#include "test_util.hpp"

using namespace tw;
using twtest::sup_diff;
using twtest::sup_from_identity;

TEST_CASE("make_uniform_tessellation") {
  CHECK(make_uniform_tessellation(1).borders.empty());
  CHECK(make_uniform_tessellation(2).borders == std::vector<double>{0.5});
  CHECK(make_uniform_tessellation(4).borders == std::vector<double>{0.25, 0.5, 0.75});
  CHECK_THROWS_AS(make_uniform_tessellation(0), InvalidArgument);
}

TEST_CASE("tessellation cell lookup extends beyond the domain") {
  const Tessellation tess = make_uniform_tessellation(4);
  CHECK(tess.cell_index(0.1) == 0);
  CHECK(tess.cell_index(0.3) == 1);
  CHECK(tess.cell_index(0.99) == 3);
  CHECK(tess.cell_index(-0.5) == 0);
  CHECK(tess.cell_index(1.5) == 3);
  CHECK(tess.cell_center(0) == doctest::Approx(0.125));
}

TEST_CASE("activate_slopes") {
  const auto ones = activate_slopes(std::vector<double>{0.0, 0.0, 0.0});
  CHECK(ones == std::vector<double>{1.0, 1.0, 1.0});
  const auto two = activate_slopes(std::vector<double>{std::log(2.0)});
  CHECK(two[0] == doctest::Approx(2.0));
  const auto pair = activate_slopes(std::vector<double>{-1.0, 1.0});
  CHECK(pair[0] == doctest::Approx(std::exp(-1.0)));
  CHECK(pair[1] == doctest::Approx(std::exp(1.0)));
  // clamp keeps huge raw values finite
  const auto huge = activate_slopes(std::vector<double>{1e9, -1e9});
  CHECK(huge[0] == doctest::Approx(std::exp(20.0)));
  CHECK(huge[1] == doctest::Approx(std::exp(-20.0)));
  CHECK(huge[1] > 0.0);
}

TEST_CASE("solve_offsets follows the continuity recursion") {
  const Tessellation two = make_uniform_tessellation(2);
  const auto equal = solve_offsets(two, std::vector<double>{1.0, 1.0}, 0.3);
  CHECK(equal == std::vector<double>{0.3, 0.3});

  const auto step = solve_offsets(two, std::vector<double>{2.0, 1.0}, 0.0);
  CHECK(step[0] == doctest::Approx(0.0));
  CHECK(step[1] == doctest::Approx(0.5));

  const Tessellation uneven(3, {0.25, 0.75});
  const auto three = solve_offsets(uneven, std::vector<double>{1.0, 2.0, 1.0}, 0.0);
  CHECK(three[0] == doctest::Approx(0.0));
  CHECK(three[1] == doctest::Approx(-0.25));
  CHECK(three[2] == doctest::Approx(0.5));

  CHECK_THROWS_AS(solve_offsets(two, std::vector<double>{1.0}, 0.0), InvalidArgument);
}

TEST_CASE("eval_velocity") {
  const Tessellation two = make_uniform_tessellation(2);
  const CpaVelocityField identity_like(two, {1.0, 1.0}, 0.0);
  CHECK(eval_velocity(identity_like, 0.7) == doctest::Approx(0.7));

  const CpaVelocityField field(two, {2.0, 1.0}, 0.0);
  CHECK(eval_velocity(field, 0.25) == doctest::Approx(0.5));
  CHECK(eval_velocity(field, 0.75) == doctest::Approx(1.25));
}

TEST_CASE("velocity is continuous across borders") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto fields = twtest::random_fields(rng, 1, 8, 1.5);
    const auto& f = fields.front();
    for (double tau : f.tess.borders) {
      // evaluate the affine maps of both neighbouring cells directly
      const int right = f.tess.cell_index(tau);
      const int left = right - 1 >= 0 ? right - 1 : 0;
      const double vl = f.slopes[left] * tau + f.offsets[left];
      const double vr = f.slopes[right] * tau + f.offsets[right];
      const double scale = std::max({std::abs(vl), std::abs(vr), 1.0});
      CHECK(std::abs(vl - vr) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("fields with non-positive slopes are rejected") {
  const Tessellation two = make_uniform_tessellation(2);
  CHECK_THROWS_AS(CpaVelocityField(two, {1.0, 0.0}, 0.0), InvariantViolation);
  CHECK_THROWS_AS(CpaVelocityField(two, {-1.0, 1.0}, 0.0), InvariantViolation);
}

TEST_CASE("euler_step") {
  const Tessellation one = make_uniform_tessellation(1);
  const auto id5 = WarpFunction::identity(5);

  const CpaVelocityField unit(one, {1.0}, 0.0);
  const auto doubled = euler_step(id5.values, unit);
  for (int j = 0; j < 5; ++j) CHECK(doubled[j] == doctest::Approx(2.0 * id5.values[j]));

  const CpaVelocityField shifted(one, {1.0}, 0.5);
  const auto with_offset = euler_step(id5.values, shifted);
  for (int j = 0; j < 5; ++j)
    CHECK(with_offset[j] == doctest::Approx(2.0 * id5.values[j] + 0.5));

  // affine in, cellwise-equal slopes -> affine out (checked via three points)
  const std::vector<double> affine{0.1, 0.45, 0.8};
  const auto out = euler_step(affine, shifted);
  CHECK(out[1] - out[0] == doctest::Approx(out[2] - out[1]));

  CHECK_THROWS_AS(euler_step(std::vector<double>{0.0, 0.5, 0.4}, unit), InvariantViolation);
}

TEST_CASE("boundary_scale") {
  const auto id = boundary_scale(std::vector<double>{0.0, 0.5, 1.0});
  CHECK(id.values == std::vector<double>{0.0, 0.5, 1.0});

  // 2*tau + 0.5 rescales back to the identity
  const auto affine = boundary_scale(std::vector<double>{0.5, 1.5, 2.5});
  CHECK(affine.values[0] == 0.0);
  CHECK(affine.values[1] == doctest::Approx(0.5));
  CHECK(affine.values[2] == 1.0);

  const auto three = boundary_scale(std::vector<double>{0.1, 0.5, 0.9});
  CHECK(three.values[0] == 0.0);
  CHECK(three.values[1] == doctest::Approx(0.5));
  CHECK(three.values[2] == 1.0);

  CHECK_THROWS_AS(boundary_scale(std::vector<double>{0.3, 0.3 + 1e-13}), NumericError);
}

TEST_CASE("integrate_warp worked example") {
  const Tessellation two = make_uniform_tessellation(2);
  const CpaVelocityField field(two, activate_slopes(std::vector<double>{std::log(2.0), 0.0}), 0.0);
  const auto gamma = integrate_warp(std::vector<CpaVelocityField>{field}, 3);
  CHECK(gamma.values[0] == 0.0);
  CHECK(gamma.values[1] == doctest::Approx(0.6));
  CHECK(gamma.values[2] == 1.0);
}

TEST_CASE("integrate_warp collapses cellwise-equal slopes to the identity") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tessellation tess = make_uniform_tessellation(4);
    std::vector<CpaVelocityField> fields;
    const int blocks = 1 + static_cast<int>(rng.index(6));
    for (int l = 0; l < blocks; ++l) {
      const double a = std::exp(rng.normal(0.0, 1.0));
      const double b = rng.normal(0.0, 0.5);
      fields.emplace_back(tess, std::vector<double>(4, a), b);
    }
    const auto gamma = integrate_warp(fields, 33);
    CHECK(sup_from_identity(gamma) < 1e-12);
  }
}

TEST_CASE("integrate_warp enforces a shared tessellation") {
  const CpaVelocityField a(make_uniform_tessellation(2), {1.0, 1.0}, 0.0);
  const CpaVelocityField b(make_uniform_tessellation(3), {1.0, 1.0, 1.0}, 0.0);
  CHECK_THROWS_AS(integrate_warp(std::vector<CpaVelocityField>{a, b}, 8), InvalidArgument);
}

TEST_CASE("monotonicity and boundary over random parameter draws") {
  Rng rng(12345);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n_cells = static_cast<int>(rng.index(16)) + 1;
    const int blocks = static_cast<int>(rng.index(8)) + 1;
    const auto fields = twtest::random_fields(rng, blocks, n_cells, 2.0);
    const auto gamma = integrate_warp(fields, 64);
    REQUIRE_NOTHROW(gamma.validate());
    CHECK(gamma.values.front() == 0.0);
    CHECK(gamma.values.back() == 1.0);
  }
}

TEST_CASE("refinement consistency: shared grid points agree") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const auto fields = twtest::random_fields(rng, 4, 8, 1.0);
    const int t_len = 33;
    const auto coarse = integrate_warp(fields, t_len);
    const auto fine = integrate_warp(fields, 2 * t_len - 1);
    double worst = 0.0;
    for (int j = 0; j < t_len; ++j)
      worst = std::max(worst, std::abs(coarse.values[j] - fine.values[2 * j]));
    CHECK(worst <= 5.0 / t_len);
    // pointwise integration makes shared points agree to round-off
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("apply_warp") {
  TimeSeries ramp(1, 4, std::vector<double>{0.0, 1.0, 2.0, 3.0});

  SUBCASE("identity leaves the series bitwise unchanged") {
    const auto out = apply_warp(ramp, WarpFunction::identity(4));
    CHECK(out.data == ramp.data);
  }
  SUBCASE("hand-computed interpolation") {
    WarpFunction gamma;
    gamma.values = {0.0, 1.0 / 9.0, 4.0 / 9.0, 1.0};
    const auto out = apply_warp(ramp, gamma);
    CHECK(out.data[0] == doctest::Approx(0.0));
    CHECK(out.data[1] == doctest::Approx(1.0 / 3.0));
    CHECK(out.data[2] == doctest::Approx(4.0 / 3.0));
    CHECK(out.data[3] == doctest::Approx(3.0));
  }
  SUBCASE("constant series is invariant under any warp") {
    TimeSeries flat(2, 16, std::vector<double>(32, 4.25));
    Rng rng(5);
    const auto gamma = integrate_warp(twtest::random_fields(rng, 3, 4, 1.0), 16);
    const auto out = apply_warp(flat, gamma);
    for (double v : out.data) CHECK(v == doctest::Approx(4.25));
  }
  SUBCASE("warp on a different grid is resampled") {
    const auto out = apply_warp(ramp, WarpFunction::identity(9));
    CHECK(out.data[1] == doctest::Approx(ramp.data[1]));
  }
}

TEST_CASE("compose_warps") {
  const auto id = WarpFunction::identity(17);
  WarpFunction square;
  square.values.resize(17);
  for (int j = 0; j < 17; ++j) square.values[j] = id.values[j] * id.values[j];
  square.values[0] = 0.0;
  square.values[16] = 1.0;

  SUBCASE("identity is neutral on both sides") {
    CHECK(sup_diff(compose_warps(square, id).values, square.values) < 1e-15);
    CHECK(sup_diff(compose_warps(id, square).values, square.values) < 1e-15);
  }
  SUBCASE("sampled composition converges to the analytic tau^4") {
    double prev_err = 1.0;
    for (int n : {33, 129, 513}) {
      WarpFunction sq;
      sq.values.resize(n);
      for (int j = 0; j < n; ++j) {
        const double tau = static_cast<double>(j) / (n - 1);
        sq.values[j] = tau * tau;
      }
      sq.values[0] = 0.0;
      sq.values[n - 1] = 1.0;
      const auto quart = compose_warps(sq, sq);
      double err = 0.0;
      for (int j = 0; j < n; ++j) {
        const double tau = static_cast<double>(j) / (n - 1);
        err = std::max(err, std::abs(quart.values[j] - tau * tau * tau * tau));
      }
      CHECK(err < prev_err);
      prev_err = err;
    }
    CHECK(prev_err < 1e-4);
  }
}

TEST_CASE("invert_warp") {
  SUBCASE("identity inverts to identity") {
    const auto inv = invert_warp(WarpFunction::identity(33));
    CHECK(sup_from_identity(inv) < 1e-15);
  }
  SUBCASE("tau^2 inverts to sqrt within grid error") {
    const int n = 257;
    WarpFunction sq;
    sq.values.resize(n);
    for (int j = 0; j < n; ++j) {
      const double tau = static_cast<double>(j) / (n - 1);
      sq.values[j] = tau * tau;
    }
    sq.values[0] = 0.0;
    sq.values[n - 1] = 1.0;
    const auto inv = invert_warp(sq);
    double err = 0.0;
    for (int j = 0; j < n; ++j) {
      const double tau = static_cast<double>(j) / (n - 1);
      err = std::max(err, std::abs(inv.values[j] - std::sqrt(tau)));
    }
    CHECK(err < 5e-3);  // sqrt has unbounded slope at 0; linear interp converges slowly there
  }
  SUBCASE("group property: compose(gamma, invert(gamma)) is the identity") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const auto fields = twtest::random_fields(rng, 4, 8, 1.0);
      const auto gamma = integrate_warp(fields, 256);
      const auto inv = invert_warp(gamma);
      const auto round = compose_warps(gamma, inv);
      CHECK(sup_from_identity(round) <= 1e-3);
    }
  }
}

TEST_CASE("warp csv and json round trips") {
  Rng rng(8);
  const auto gamma = integrate_warp(twtest::random_fields(rng, 2, 4, 1.0), 21);

  std::stringstream csv;
  warp_to_csv(gamma, csv);
  const auto from_csv = warp_from_csv(csv);
  CHECK(from_csv.values == gamma.values);

  const auto from_json = warp_from_json(warp_to_json(gamma));
  CHECK(from_json.values == gamma.values);
}
