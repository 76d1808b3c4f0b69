#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "tw/errors.hpp"
#include "tw/random.hpp"
#include "tw/tensor.hpp"
#include "tw/warp_ops.hpp"

#include "test_util.hpp"

using namespace tw;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

std::vector<std::vector<double>> random_values(const std::vector<TensorShape>& shapes,
                                               std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> x;
  for (const auto& s : shapes) {
    std::vector<double> v(s.numel());
    for (double& e : v) e = rng.normal(0.0, scale);
    x.push_back(std::move(v));
  }
  return x;
}

GradCheckReport run_gradcheck(const Builder& build, const std::vector<TensorShape>& shapes,
                              const std::vector<std::vector<double>>& x0, double eps = 1e-4) {
  const auto probe = [&](const std::vector<std::vector<double>>& x) {
    Tape tape;
    std::vector<Var> leaves;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      leaves.push_back(tape.leaf(shapes[i], x[i], true));
    const Var loss = build(tape, leaves);
    return ProbeResult{tape.value(loss), tape.branch_hash()};
  };
  Tape tape;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    leaves.push_back(tape.leaf(shapes[i], x0[i], true));
  const Var loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const Var v : leaves) {
    auto g = tape.grad(v);
    analytic.emplace_back(g.begin(), g.end());
  }
  return gradcheck(probe, x0, analytic, eps, 1e-5);
}

/// Reduces any output to a scalar with fixed pseudo-random weights so
/// index-transposition bugs cannot cancel out.
Var weighted(Tape& tape, Var out, std::uint64_t seed = 17) {
  Rng rng(seed);
  std::vector<double> w(tape.at(out).numel());
  for (double& v : w) v = rng.normal();
  return tape.dot(out, tape.constant(tape.at(out).shape, w));
}

}  // namespace

TEST_CASE("conv1d forward examples") {
  Tape tape;
  const Var x = tape.constant(TensorShape::mat(1, 3), std::vector<double>{1.0, 2.0, 3.0});

  SUBCASE("identity kernel") {
    const Var w = tape.constant(TensorShape::cube(1, 1, 3), std::vector<double>{0.0, 1.0, 0.0});
    const Var b = tape.constant(TensorShape::vec(1), std::vector<double>{0.0});
    const Var y = tape.conv1d(x, w, b);
    CHECK(tape.values(y)[0] == 1.0);
    CHECK(tape.values(y)[1] == 2.0);
    CHECK(tape.values(y)[2] == 3.0);
  }
  SUBCASE("box kernel with zero padding") {
    const Var w = tape.constant(TensorShape::cube(1, 1, 3), std::vector<double>{1.0, 1.0, 1.0});
    const Var b = tape.constant(TensorShape::vec(1), std::vector<double>{0.0});
    const Var y = tape.conv1d(x, w, b);
    CHECK(tape.values(y)[0] == 3.0);
    CHECK(tape.values(y)[1] == 6.0);
    CHECK(tape.values(y)[2] == 5.0);
  }
  SUBCASE("zero kernel passes the bias through") {
    const Var w = tape.constant(TensorShape::cube(1, 1, 3), std::vector<double>{0.0, 0.0, 0.0});
    const Var b = tape.constant(TensorShape::vec(1), std::vector<double>{4.5});
    const Var y = tape.conv1d(x, w, b);
    for (double v : tape.values(y)) CHECK(v == 4.5);
  }
  SUBCASE("shape validation") {
    const Var w = tape.constant(TensorShape::cube(1, 2, 3), std::vector<double>(6, 0.0));
    const Var b = tape.constant(TensorShape::vec(1), std::vector<double>{0.0});
    CHECK_THROWS_AS(tape.conv1d(x, w, b), InvalidArgument);
  }
}

TEST_CASE("linear forward examples") {
  Tape tape;
  SUBCASE("identity") {
    const Var x = tape.constant(TensorShape::vec(2), std::vector<double>{3.0, -1.0});
    const Var w = tape.constant(TensorShape::mat(2, 2), std::vector<double>{1, 0, 0, 1});
    const Var b = tape.constant(TensorShape::vec(2), std::vector<double>{0.0, 0.0});
    const Var y = tape.linear(x, w, b);
    CHECK(tape.values(y)[0] == 3.0);
    CHECK(tape.values(y)[1] == -1.0);
  }
  SUBCASE("hand arithmetic") {
    const Var x = tape.constant(TensorShape::vec(2), std::vector<double>{2.0, 3.0});
    const Var w = tape.constant(TensorShape::mat(1, 2), std::vector<double>{1.0, 1.0});
    const Var b = tape.constant(TensorShape::vec(1), std::vector<double>{1.0});
    CHECK(tape.values(tape.linear(x, w, b))[0] == 6.0);
  }
  SUBCASE("zero weight returns the bias") {
    const Var x = tape.constant(TensorShape::vec(3), std::vector<double>{5, 6, 7});
    const Var w = tape.constant(TensorShape::mat(2, 3), std::vector<double>(6, 0.0));
    const Var b = tape.constant(TensorShape::vec(2), std::vector<double>{-1.0, 2.0});
    const Var y = tape.linear(x, w, b);
    CHECK(tape.values(y)[0] == -1.0);
    CHECK(tape.values(y)[1] == 2.0);
  }
}

TEST_CASE("backward examples") {
  SUBCASE("sum of any shape gives all-ones") {
    Tape tape;
    const Var x = tape.leaf(TensorShape::mat(2, 3), std::vector<double>{1, 2, 3, 4, 5, 6}, true);
    tape.backward(tape.sum(x));
    for (double g : tape.grad(x)) CHECK(g == 1.0);
  }
  SUBCASE("squared norm gives 2x") {
    Tape tape;
    const Var x = tape.leaf(TensorShape::vec(2), std::vector<double>{1.0, -2.0}, true);
    tape.backward(tape.dot(x, x));
    CHECK(tape.grad(x)[0] == 2.0);
    CHECK(tape.grad(x)[1] == -4.0);
  }
  SUBCASE("relu subgradient is 0 at negative inputs") {
    Tape tape;
    const Var x = tape.leaf(TensorShape::vec(2), std::vector<double>{-1.0, 3.0}, true);
    tape.backward(tape.sum(tape.relu(x)));
    CHECK(tape.grad(x)[0] == 0.0);
    CHECK(tape.grad(x)[1] == 1.0);
  }
  SUBCASE("disconnected leaf keeps a zero gradient") {
    Tape tape;
    const Var x = tape.leaf(TensorShape::vec(2), std::vector<double>{1.0, 2.0}, true);
    const Var y = tape.leaf(TensorShape::vec(2), std::vector<double>{3.0, 4.0}, true);
    tape.backward(tape.sum(x));
    for (double g : tape.grad(y)) CHECK(g == 0.0);
  }
}

TEST_CASE("gradcheck covers every primitive") {
  SUBCASE("elementwise chain: mul, exp, clamp, scale, add, sub") {
    const std::vector<TensorShape> shapes{TensorShape::vec(5), TensorShape::vec(5)};
    const auto x0 = random_values(shapes, 11, 0.5);
    const auto report = run_gradcheck(
        [](Tape& t, const std::vector<Var>& v) {
          const Var prod = t.mul(v[0], v[1]);
          const Var mix = t.sub(t.add(prod, v[0]), t.scale(v[1], 0.7));
          return weighted(t, t.exp(t.clamp(mix, -2.0, 2.0)));
        },
        shapes, x0);
    CHECK(report.max_rel_error < 1e-5);
    CHECK(report.checked > 0);
  }
  SUBCASE("relu away from kinks") {
    const std::vector<TensorShape> shapes{TensorShape::vec(8)};
    auto x0 = random_values(shapes, 5, 1.0);
    for (double& v : x0[0])
      if (std::abs(v) < 0.05) v = 0.3;  // keep the probe away from the corner
    const auto report = run_gradcheck(
        [](Tape& t, const std::vector<Var>& v) { return weighted(t, t.relu(v[0])); },
        shapes, x0);
    CHECK(report.max_rel_error < 1e-5);
  }
  SUBCASE("reductions: sum, mean, dot") {
    const std::vector<TensorShape> shapes{TensorShape::vec(6), TensorShape::vec(6)};
    const auto x0 = random_values(shapes, 21);
    const auto report = run_gradcheck(
        [](Tape& t, const std::vector<Var>& v) {
          return t.add(t.add(t.sum(v[0]), t.mean(v[1])), t.dot(v[0], v[1]));
        },
        shapes, x0);
    CHECK(report.max_rel_error < 1e-5);
  }
  SUBCASE("conv1d") {
    const std::vector<TensorShape> shapes{TensorShape::mat(2, 7), TensorShape::cube(3, 2, 5),
                                          TensorShape::vec(3)};
    const auto x0 = random_values(shapes, 31);
    const auto report = run_gradcheck(
        [](Tape& t, const std::vector<Var>& v) {
          return weighted(t, t.conv1d(v[0], v[1], v[2]));
        },
        shapes, x0);
    CHECK(report.max_rel_error < 1e-5);
  }
  SUBCASE("linear") {
    const std::vector<TensorShape> shapes{TensorShape::vec(4), TensorShape::mat(3, 4),
                                          TensorShape::vec(3)};
    const auto x0 = random_values(shapes, 41);
    const auto report = run_gradcheck(
        [](Tape& t, const std::vector<Var>& v) {
          return weighted(t, t.linear(v[0], v[1], v[2]));
        },
        shapes, x0);
    CHECK(report.max_rel_error < 1e-5);
  }
  SUBCASE("global_avg_pool, slice, channel_slice") {
    const std::vector<TensorShape> shapes{TensorShape::mat(3, 6)};
    const auto x0 = random_values(shapes, 51);
    const auto report = run_gradcheck(
        [](Tape& t, const std::vector<Var>& v) {
          const Var pooled = t.global_avg_pool(v[0]);          // [3]
          const Var part = t.slice(pooled, 1, 2);              // [2]
          const Var rows = t.channel_slice(v[0], 1, 2);        // [2 x 6]
          return t.add(weighted(t, part, 3), weighted(t, rows, 4));
        },
        shapes, x0);
    CHECK(report.max_rel_error < 1e-5);
  }
  SUBCASE("gather_linear propagates to samples and positions") {
    const std::vector<TensorShape> shapes{TensorShape::mat(2, 9), TensorShape::vec(5)};
    auto x0 = random_values(shapes, 61);
    // positions strictly inside segments, away from integers
    x0[1] = {0.4, 2.6, 3.3, 5.5, 7.7};
    const auto report = run_gradcheck(
        [](Tape& t, const std::vector<Var>& v) {
          return weighted(t, t.gather_linear(v[0], v[1]));
        },
        shapes, x0);
    CHECK(report.max_rel_error < 1e-5);
  }
}

TEST_CASE("gradcheck reference behaviours") {
  SUBCASE("quadratic loss is exact to near round-off") {
    const std::vector<TensorShape> shapes{TensorShape::vec(4)};
    const auto x0 = random_values(shapes, 71);
    const auto report = run_gradcheck(
        [](Tape& t, const std::vector<Var>& v) { return t.dot(v[0], v[0]); }, shapes, x0);
    CHECK(report.max_rel_error < 1e-7);
  }
  SUBCASE("constant function has zero gradients both ways") {
    const std::vector<TensorShape> shapes{TensorShape::vec(3)};
    const auto x0 = random_values(shapes, 81);
    const auto probe = [](const std::vector<std::vector<double>>&) {
      return ProbeResult{2.5, 0};
    };
    const std::vector<std::vector<double>> analytic{{0.0, 0.0, 0.0}};
    const auto report = gradcheck(probe, x0, analytic, 1e-4, 1e-9);
    CHECK(report.max_rel_error == 0.0);
  }
  SUBCASE("eps outside [1e-6, 1e-3] is rejected") {
    const auto probe = [](const std::vector<std::vector<double>>&) {
      return ProbeResult{0.0, 0};
    };
    CHECK_THROWS_AS(gradcheck(probe, {{1.0}}, {{0.0}}, 1e-2, 1e-5), InvalidArgument);
  }
}

TEST_CASE("backward is linear in the loss") {
  const TensorShape shape = TensorShape::vec(6);
  const auto x0 = random_values({shape}, 91);
  const double alpha = 1.7, beta = -0.4;

  const auto grads_of = [&](double ca, double cb) {
    Tape tape;
    const Var x = tape.leaf(shape, x0[0], true);
    const Var l1 = tape.dot(x, x);
    const Var l2 = tape.sum(tape.exp(tape.scale(x, 0.3)));
    tape.backward(tape.add(tape.scale(l1, ca), tape.scale(l2, cb)));
    auto g = tape.grad(x);
    return std::vector<double>(g.begin(), g.end());
  };
  const auto g1 = grads_of(1.0, 0.0);
  const auto g2 = grads_of(0.0, 1.0);
  const auto gmix = grads_of(alpha, beta);
  for (std::size_t i = 0; i < gmix.size(); ++i)
    CHECK(gmix[i] == doctest::Approx(alpha * g1[i] + beta * g2[i]).epsilon(1e-12));
}

TEST_CASE("identical runs are bit-identical") {
  const std::vector<TensorShape> shapes{TensorShape::mat(2, 5), TensorShape::cube(2, 2, 3),
                                        TensorShape::vec(2)};
  const auto x0 = random_values(shapes, 101);
  const auto run = [&] {
    Tape tape;
    std::vector<Var> leaves;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      leaves.push_back(tape.leaf(shapes[i], x0[i], true));
    const Var y = tape.relu(tape.conv1d(leaves[0], leaves[1], leaves[2]));
    const Var loss = tape.dot(y, y);
    tape.backward(loss);
    std::vector<double> all;
    all.push_back(tape.value(loss));
    for (const Var v : leaves) {
      auto g = tape.grad(v);
      all.insert(all.end(), g.begin(), g.end());
    }
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite forward values raise NumericError") {
  Tape tape;
  const Var x = tape.leaf(TensorShape::vec(1), std::vector<double>{1000.0}, true);
  CHECK_THROWS_AS(tape.exp(x), NumericError);
}

// ---------------------------------------------------------------------------
// differentiable warp kernels

TEST_CASE("cpa tape ops match the plain kernels") {
  Rng rng(7);
  const Tessellation tess = make_uniform_tessellation(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> raw(4);
    for (double& r : raw) r = rng.normal();
    const auto slopes = activate_slopes(raw);
    const double b1 = rng.normal();
    const CpaVelocityField field(tess, slopes, b1);

    Tape tape;
    const Var a = tape.constant(TensorShape::vec(4), slopes);
    const Var b0 = tape.constant(TensorShape::vec(1), std::vector<double>{b1});
    const Var offs = cpa_offsets_op(tape, a, b0, tess);
    CHECK(twtest::sup_diff(tape.values(offs), field.offsets) == 0.0);

    const auto id = WarpFunction::identity(17);
    const Var gamma = tape.constant(TensorShape::vec(17), id.values);
    const Var stepped = cpa_euler_step_op(tape, gamma, a, offs, tess);
    const auto plain = euler_step(id.values, field);
    CHECK(twtest::sup_diff(tape.values(stepped), plain) == 0.0);

    const Var scaled = boundary_scale_op(tape, stepped);
    const auto plain_scaled = boundary_scale(plain);
    CHECK(twtest::sup_diff(tape.values(scaled), plain_scaled.values) == 0.0);
  }
}

TEST_CASE("warp_signal_op matches apply_warp") {
  Rng rng(13);
  const auto series = twtest::random_series(rng, 3, 25);
  const auto gamma = integrate_warp(twtest::random_fields(rng, 3, 4, 1.0), 25);

  Tape tape;
  const Var sig = tape.constant(TensorShape::mat(3, 25), series.data);
  const Var g = tape.constant(TensorShape::vec(25), gamma.values);
  const Var warped = warp_signal_op(tape, sig, g);
  const auto plain = apply_warp(series, gamma);
  CHECK(twtest::sup_diff(tape.values(warped), plain.data) == 0.0);
}

TEST_CASE("gradcheck through the flow chain") {
  const Tessellation tess = make_uniform_tessellation(3);
  const int t_len = 11;
  Rng rng(19);
  std::vector<double> signal(2 * t_len);
  for (double& v : signal) v = rng.normal();

  const std::vector<TensorShape> shapes{TensorShape::vec(3), TensorShape::vec(1),
                                        TensorShape::vec(3), TensorShape::vec(1)};
  std::vector<std::vector<double>> x0{{0.3, -0.2, 0.5}, {0.1}, {-0.4, 0.2, 0.1}, {-0.05}};

  const auto report = run_gradcheck(
      [&](Tape& t, const std::vector<Var>& v) {
        Var gamma = t.constant(TensorShape::vec(t_len), WarpFunction::identity(t_len).values);
        for (int block = 0; block < 2; ++block) {
          const Var a = t.exp(t.clamp(v[2 * block], -20.0, 20.0));
          const Var offs = cpa_offsets_op(t, a, v[2 * block + 1], tess);
          gamma = cpa_euler_step_op(t, gamma, a, offs, tess);
        }
        const Var scaled = boundary_scale_op(t, gamma);
        const Var sig = t.constant(TensorShape::mat(2, t_len), signal);
        return weighted(t, warp_signal_op(t, sig, scaled));
      },
      shapes, x0);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.checked > 0);
}
