#include "tw/warp_ops.hpp"

#include <cmath>

#include "tw/errors.hpp"

namespace tw {

Var cpa_offsets_op(Tape& tape, Var slopes, Var offset0, const Tessellation& tess) {
  const int n = tess.n_cells;
  if (tape.at(slopes).numel() != n)
    throw InvalidArgument("cpa_offsets_op: slope count must equal n_cells");
  if (tape.at(offset0).numel() != 1)
    throw InvalidArgument("cpa_offsets_op: offset0 must be a single value");

  Tensor t(TensorShape::vec(n));
  auto a = tape.values(slopes);
  t.v[0] = tape.values(offset0)[0];
  for (int i = 1; i < n; ++i)
    t.v[i] = (a[i - 1] - a[i]) * tess.borders[i - 1] + t.v[i - 1];

  const Var out{static_cast<std::int32_t>(tape.size())};
  const Var ins[] = {slopes, offset0};
  return tape.push_node("cpa_offsets", std::move(t), ins,
                        [slopes, offset0, out, borders = tess.borders, n](Tape& tp) {
    auto g = tp.grad(out);
    // b_{i+1} = b_i + (a_i - a_{i+1})·tau_i; run the recursion backwards,
    // pushing each cotangent onto its inputs.
    std::vector<double> gb(g.begin(), g.end());
    const bool wants_a = tp.needs_grad(slopes);
    auto ga = wants_a ? tp.grad_mut(slopes) : std::span<double>{};
    for (int i = n - 1; i >= 1; --i) {
      const double gi = gb[i];
      if (gi == 0.0) continue;
      gb[i - 1] += gi;
      if (wants_a) {
        ga[i - 1] += gi * borders[i - 1];
        ga[i] -= gi * borders[i - 1];
      }
    }
    if (tp.needs_grad(offset0)) tp.grad_mut(offset0)[0] += gb[0];
  });
}

Var cpa_euler_step_op(Tape& tape, Var gamma, Var slopes, Var offsets,
                      const Tessellation& tess) {
  const int n = tape.at(gamma).numel();
  if (tape.at(slopes).numel() != tess.n_cells || tape.at(offsets).numel() != tess.n_cells)
    throw InvalidArgument("cpa_euler_step_op: field size must equal n_cells");
  auto gv = tape.values(gamma);
  for (int j = 1; j < n; ++j)
    if (!(gv[j] > gv[j - 1]))
      throw InvariantViolation("cpa_euler_step_op: input must be strictly increasing");

  auto a = tape.values(slopes);
  auto b = tape.values(offsets);
  std::vector<int> cells(n);
  Tensor t(TensorShape::vec(n));
  for (int j = 0; j < n; ++j) {
    const int c = tess.cell_index(gv[j]);
    cells[j] = c;
    // same association as eval_velocity so both paths agree bitwise
    t.v[j] = gv[j] + (a[c] * gv[j] + b[c]);
    tape.mix_branch((static_cast<std::uint64_t>(j) << 10) | static_cast<std::uint64_t>(c));
  }

  const Var out{static_cast<std::int32_t>(tape.size())};
  const Var ins[] = {gamma, slopes, offsets};
  return tape.push_node("cpa_euler_step", std::move(t), ins,
                        [gamma, slopes, offsets, out, cells = std::move(cells), n](Tape& tp) {
    auto g = tp.grad(out);
    auto gv = tp.values(gamma);
    auto a = tp.values(slopes);
    if (tp.needs_grad(gamma)) {
      auto gg = tp.grad_mut(gamma);
      for (int j = 0; j < n; ++j) gg[j] += g[j] * (1.0 + a[cells[j]]);
    }
    if (tp.needs_grad(slopes)) {
      auto ga = tp.grad_mut(slopes);
      for (int j = 0; j < n; ++j) ga[cells[j]] += g[j] * gv[j];
    }
    if (tp.needs_grad(offsets)) {
      auto gb = tp.grad_mut(offsets);
      for (int j = 0; j < n; ++j) gb[cells[j]] += g[j];
    }
  });
}

Var boundary_scale_op(Tape& tape, Var gamma_raw) {
  const int n = tape.at(gamma_raw).numel();
  if (n < 2) throw InvalidArgument("boundary_scale_op: needs >= 2 samples");
  auto x = tape.values(gamma_raw);
  const double lo = x[0];
  const double range = x[n - 1] - lo;
  if (!(range > 1e-12)) throw NumericError("boundary_scale_op: degenerate value range");

  Tensor t(TensorShape::vec(n));
  for (int j = 0; j < n; ++j) t.v[j] = (x[j] - lo) / range;
  t.v[0] = 0.0;
  t.v[n - 1] = 1.0;

  const Var out{static_cast<std::int32_t>(tape.size())};
  const Var ins[] = {gamma_raw};
  return tape.push_node("boundary_scale", std::move(t), ins,
                        [gamma_raw, out, n, range](Tape& tp) {
    if (!tp.needs_grad(gamma_raw)) return;
    auto g = tp.grad(out);
    auto y = tp.values(out);
    auto gx = tp.grad_mut(gamma_raw);
    const double inv = 1.0 / range;
    for (int j = 0; j < n; ++j) {
      const double gj = g[j];
      if (gj == 0.0) continue;
      gx[j] += gj * inv;
      gx[0] += gj * (y[j] - 1.0) * inv;
      gx[n - 1] -= gj * y[j] * inv;
    }
  });
}

Var warp_signal_op(Tape& tape, Var signal, Var gamma) {
  const int len = tape.at(signal).shape.extent[1];
  if (tape.at(gamma).numel() != len)
    throw InvalidArgument("warp_signal_op: warp grid must match signal length");
  const Var idx = tape.scale(gamma, static_cast<double>(len - 1));
  return tape.gather_linear(signal, idx);
}

}  // namespace tw
