#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "tw/errors.hpp"
#include "tw/model.hpp"
#include "tw/random.hpp"

#include "test_util.hpp"

using namespace tw;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_blocks = 2;
  c.kernel_size = 3;
  c.channels = 4;
  c.n_cells = 4;
  c.input_channels = 2;
  c.seed = 42;
  return c;
}

/// Fills every parameter (projection heads included) with noise so the
/// emitted warp is far from the identity.
void randomize_params(ModelParams& params, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (Tensor* t : trainable_tensors(params))
    for (double& v : t->v) v = rng.normal(0.0, scale);
}

}  // namespace

TEST_CASE("init_params is deterministic and Xavier-scaled") {
  ModelConfig c = tiny_config();
  c.channels = 32;
  c.input_channels = 7;
  c.kernel_size = 51;

  const ModelParams a = init_params(c);
  const ModelParams b = init_params(c);
  CHECK(a.embed.w.v == b.embed.w.v);
  CHECK(a.blocks[1].conv[2].w.v == b.blocks[1].conv[2].w.v);

  // embedding weight variance within 10% of 2/(fan_in+fan_out)
  const double expected = 2.0 / (7 * 51 + 32 * 51);
  double mean = 0.0;
  for (double v : a.embed.w.v) mean += v;
  mean /= static_cast<double>(a.embed.w.v.size());
  double var = 0.0;
  for (double v : a.embed.w.v) var += (v - mean) * (v - mean);
  var /= static_cast<double>(a.embed.w.v.size());
  CHECK(a.embed.w.v.size() > 10000);
  CHECK(var == doctest::Approx(expected).epsilon(0.10));

  // projection heads start at zero
  for (const auto& block : a.blocks) {
    for (double v : block.proj_w.v) CHECK(v == 0.0);
    for (double v : block.proj_b.v) CHECK(v == 0.0);
  }
  // conv biases start at zero
  for (double v : a.blocks[0].conv[0].b.v) CHECK(v == 0.0);
}

TEST_CASE("identity at initialization, exactly and bitwise") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    ModelConfig c = tiny_config();
    c.n_blocks = 1 + static_cast<int>(rng.index(4));
    c.n_cells = 1 + static_cast<int>(rng.index(8));
    c.channels = 2 + static_cast<int>(rng.index(6));
    c.input_channels = 1 + static_cast<int>(rng.index(3));
    c.seed = rng.engine()();
    const int t_len = 8 + static_cast<int>(rng.index(40));

    const ModelParams params = init_params(c);
    const TimeSeries input = twtest::random_series(rng, c.input_channels, t_len);
    const ForwardTrace trace = forward(params, input);

    CHECK(twtest::sup_from_identity(trace.warp) == 0.0);
    CHECK(trace.warped.data == input.data);  // bitwise
  }
}

TEST_CASE("manually set projection reproduces the worked flow example") {
  ModelConfig c;
  c.n_blocks = 1;
  c.kernel_size = 3;
  c.channels = 3;
  c.n_cells = 2;
  c.input_channels = 1;
  c.seed = 1;
  ModelParams params = init_params(c);
  // raw slopes [ln 2, 0] and raw b^1 = 0 via the head bias; weights stay 0
  params.blocks[0].proj_b.v = {std::log(2.0), 0.0, 0.0};

  const TimeSeries input(1, 3, std::vector<double>{0.0, 1.0, 0.5});
  const ForwardTrace trace = forward(params, input);
  CHECK(trace.warp.values[0] == 0.0);
  CHECK(trace.warp.values[1] == doctest::Approx(0.6));
  CHECK(trace.warp.values[2] == 1.0);
  CHECK(trace.block_slopes[0][0] == doctest::Approx(2.0));
  CHECK(trace.block_slopes[0][1] == doctest::Approx(1.0));
  CHECK(trace.block_offset0[0] == doctest::Approx(0.0));
}

TEST_CASE("warped output keeps the signal shape") {
  ModelConfig c = tiny_config();
  ModelParams params = init_params(c);
  randomize_params(params, 11, 0.4);
  Rng rng(3);
  const TimeSeries input = twtest::random_series(rng, c.input_channels, 20);
  const ForwardTrace trace = forward(params, input);
  CHECK(trace.warped.channels == c.input_channels);
  CHECK(trace.warped.length == 20);
}

TEST_CASE("diffeomorphism holds for arbitrary parameter values") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    ModelConfig c = tiny_config();
    c.n_blocks = 1 + static_cast<int>(rng.index(4));
    c.seed = rng.engine()();
    ModelParams params = init_params(c);
    randomize_params(params, rng.engine()(), 0.5);
    const TimeSeries input = twtest::random_series(rng, c.input_channels, 24);
    const ForwardTrace trace = forward(params, input);
    REQUIRE_NOTHROW(trace.warp.validate());
    for (const auto& w : trace.block_warps) REQUIRE_NOTHROW(w.validate());
  }
}

TEST_CASE("degenerate extreme weights fail loudly, never silently") {
  // Weights this large push slopes to the exp clamp; the rescaled warp can
  // lose strict monotonicity to round-off, which must surface as an error.
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    ModelConfig c = tiny_config();
    c.n_blocks = 4;
    ModelParams params = init_params(c);
    randomize_params(params, rng.engine()(), 5.0);
    const TimeSeries input = twtest::random_series(rng, c.input_channels, 24);
    try {
      const ForwardTrace trace = forward(params, input);
      REQUIRE_NOTHROW(trace.warp.validate());
    } catch (const InvariantViolation&) {
      // acceptable: the violation propagated instead of corrupting output
    } catch (const NumericError&) {
      // acceptable: non-finite intermediate detected
    }
  }
}

TEST_CASE("pair mode warps only the query channels") {
  ModelConfig c = tiny_config();
  c.input_channels = 4;
  c.warp_channels = 2;
  ModelParams params = init_params(c);
  randomize_params(params, 23, 0.5);
  Rng rng(9);
  const TimeSeries input = twtest::random_series(rng, 4, 18);
  const ForwardTrace trace = forward(params, input);
  CHECK(trace.warped.channels == 2);
  // warped channels come from the first two input rows
  WarpFunction gamma = trace.warp;
  TimeSeries head(2, 18);
  std::copy_n(input.data.begin(), 2 * 18, head.data.begin());
  const TimeSeries expected = apply_warp(head, gamma);
  CHECK(trace.warped.data == expected.data);
}

TEST_CASE("changing one projection head leaves earlier blocks untouched") {
  ModelConfig c = tiny_config();
  c.n_blocks = 3;
  ModelParams params = init_params(c);
  randomize_params(params, 31, 0.5);
  Rng rng(13);
  const TimeSeries input = twtest::random_series(rng, c.input_channels, 16);
  const ForwardTrace before = forward(params, input);

  params.blocks[2].proj_w.v[5] += 0.75;  // perturb the last block only
  const ForwardTrace after = forward(params, input);

  CHECK(before.block_slopes[0] == after.block_slopes[0]);
  CHECK(before.block_slopes[1] == after.block_slopes[1]);
  CHECK(before.block_warps[0].values == after.block_warps[0].values);
  CHECK(before.block_warps[1].values == after.block_warps[1].values);
  CHECK(before.block_slopes[2] != after.block_slopes[2]);
}

TEST_CASE("one parameter set accepts any input length") {
  ModelConfig c = tiny_config();
  c.kernel_size = 5;
  ModelParams params = init_params(c);
  randomize_params(params, 37, 0.5);
  Rng rng(21);
  for (int t_len : {6, 16, 33, 57}) {
    const TimeSeries input = twtest::random_series(rng, c.input_channels, t_len);
    const ForwardTrace trace = forward(params, input);
    CHECK(trace.warp.size() == t_len);
    REQUIRE_NOTHROW(trace.warp.validate());
  }
}

TEST_CASE("kinetic energy") {
  ForwardTrace trace;
  const std::vector<double> eye2{1.0, 0.0, 0.0, 1.0};

  SUBCASE("hand dot product") {
    trace.block_slopes = {{1.0, 2.0}};
    CHECK(kinetic_energy(trace, eye2) == doctest::Approx(5.0));
  }
  SUBCASE("unit slopes give n_cells per block") {
    trace.block_slopes = {{1.0, 1.0}};
    CHECK(kinetic_energy(trace, eye2) == doctest::Approx(2.0));
  }
  SUBCASE("doubling the blocks doubles the sum") {
    trace.block_slopes = {{1.0, 2.0}};
    const double one = kinetic_energy(trace, eye2);
    trace.block_slopes.push_back({1.0, 2.0});
    CHECK(kinetic_energy(trace, eye2) == doctest::Approx(2.0 * one));
  }
  SUBCASE("size validation") {
    trace.block_slopes = {{1.0, 2.0, 3.0}};
    CHECK_THROWS_AS(kinetic_energy(trace, eye2), InvalidArgument);
  }
}

TEST_CASE("checkpoint container round-trips bitwise") {
  ModelConfig c = tiny_config();
  ModelParams params = init_params(c);
  randomize_params(params, 41, 0.6);
  Rng rng(29);
  const TimeSeries input = twtest::random_series(rng, c.input_channels, 19);
  const ForwardTrace before = forward(params, input);

  std::stringstream buffer;
  save_params(params, buffer);
  const ModelParams reloaded = load_params(buffer);
  CHECK(reloaded.config == params.config);

  const ForwardTrace after = forward(reloaded, input);
  CHECK(before.warp.values == after.warp.values);
  CHECK(before.warped.data == after.warped.data);
}

TEST_CASE("checkpoint layout starts with a little-endian header length") {
  const ModelParams params = init_params(tiny_config());
  std::stringstream buffer;
  save_params(params, buffer);
  const std::string bytes = buffer.str();
  REQUIRE(bytes.size() > 4);
  const std::uint32_t len = static_cast<unsigned char>(bytes[0]) |
                            (static_cast<unsigned char>(bytes[1]) << 8) |
                            (static_cast<unsigned char>(bytes[2]) << 16) |
                            (static_cast<unsigned char>(bytes[3]) << 24);
  REQUIRE(4 + len <= bytes.size());
  const std::string header = bytes.substr(4, len);
  CHECK(header.find("\"format_version\":1") != std::string::npos);
  CHECK(header.find("\"config\"") != std::string::npos);
  // payload is exactly one 8-byte double per parameter
  CHECK(bytes.size() - 4 - len == 8u * parameter_count(params));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const ModelParams params = init_params(tiny_config());
  std::stringstream buffer;
  save_params(params, buffer);
  std::string bytes = buffer.str();

  SUBCASE("truncated payload") {
    std::stringstream cut(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_params(cut), IoError);
  }
  SUBCASE("trailing garbage") {
    std::stringstream extra(bytes + "x");
    CHECK_THROWS_AS(load_params(extra), IoError);
  }
}
