#include "tw/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tw/errors.hpp"
#include "tw/series.hpp"

namespace tw {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace

std::string TensorShape::str() const {
  std::ostringstream ss;
  ss << '[';
  for (int i = 0; i < std::max(ndim, 1); ++i) {
    if (i) ss << 'x';
    ss << extent[i];
  }
  ss << ']';
  return ss.str();
}

Tensor::Tensor(TensorShape shape_, double fill)
    : shape(shape_), v(static_cast<std::size_t>(shape_.numel()), fill) {}

Tensor::Tensor(TensorShape shape_, std::vector<double> values)
    : shape(shape_), v(std::move(values)) {
  if (v.size() != static_cast<std::size_t>(shape.numel()))
    throw InvalidArgument("Tensor: value count does not match shape " + shape.str());
}

void Tape::check_finite(const char* op, const Tensor& t) const {
  for (double x : t.v)
    if (!std::isfinite(x))
      throw NumericError(std::string("non-finite value produced by ") + op);
}

Var Tape::push(const char* op, Tensor t, std::span<const Var> inputs,
               std::function<void(Tape&)> back) {
  check_finite(op, t);
  bool needs = t.requires_grad;
  for (Var in : inputs) needs = needs || nodes_[in.id].needs;
  Node node;
  node.t = std::move(t);
  node.back = std::move(back);
  node.needs = needs;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::push_node(const char* op, Tensor value, std::span<const Var> inputs,
                    std::function<void(Tape&)> backward) {
  return push(op, std::move(value), inputs, std::move(backward));
}

void Tape::mix_branch(std::uint64_t word) {
  branch_hash_ ^= word;
  branch_hash_ *= 1099511628211ull;
}

Var Tape::leaf(Tensor t) { return push("leaf", std::move(t), {}, nullptr); }

Var Tape::leaf(TensorShape shape, std::span<const double> values, bool requires_grad) {
  Tensor t(shape, std::vector<double>(values.begin(), values.end()));
  t.requires_grad = requires_grad;
  return leaf(std::move(t));
}

Var Tape::constant(TensorShape shape, std::span<const double> values) {
  return leaf(shape, values, false);
}

Var Tape::scalar_constant(double value) {
  Tensor t(TensorShape::scalar());
  t.v[0] = value;
  return leaf(std::move(t));
}

std::span<double> Tape::grad_mut(Var x) {
  Tensor& t = nodes_[x.id].t;
  if (t.g.empty()) t.g.assign(t.v.size(), 0.0);
  return t.g;
}

// ---------------------------------------------------------------------------
// element-wise and reductions

Var Tape::add(Var a, Var b) {
  require(at(a).shape == at(b).shape, "add: shape mismatch");
  Tensor t(at(a).shape);
  for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = at(a).v[i] + at(b).v[i];
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a, b};
  return push("add", std::move(t), ins, [a, b, out](Tape& tp) {
    auto g = tp.grad(out);
    if (tp.needs_grad(a)) {
      auto ga = tp.grad_mut(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(b)) {
      auto gb = tp.grad_mut(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  require(at(a).shape == at(b).shape, "sub: shape mismatch");
  Tensor t(at(a).shape);
  for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = at(a).v[i] - at(b).v[i];
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a, b};
  return push("sub", std::move(t), ins, [a, b, out](Tape& tp) {
    auto g = tp.grad(out);
    if (tp.needs_grad(a)) {
      auto ga = tp.grad_mut(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(b)) {
      auto gb = tp.grad_mut(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  require(at(a).shape == at(b).shape, "mul: shape mismatch");
  Tensor t(at(a).shape);
  for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = at(a).v[i] * at(b).v[i];
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a, b};
  return push("mul", std::move(t), ins, [a, b, out](Tape& tp) {
    auto g = tp.grad(out);
    if (tp.needs_grad(a)) {
      auto ga = tp.grad_mut(a);
      auto bv = tp.values(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(b)) {
      auto gb = tp.grad_mut(b);
      auto av = tp.values(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor t(at(a).shape);
  for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = c * at(a).v[i];
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a};
  return push("scale", std::move(t), ins, [a, c, out](Tape& tp) {
    if (!tp.needs_grad(a)) return;
    auto g = tp.grad(out);
    auto ga = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var Tape::exp(Var a) {
  Tensor t(at(a).shape);
  for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = std::exp(at(a).v[i]);
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a};
  return push("exp", std::move(t), ins, [a, out](Tape& tp) {
    if (!tp.needs_grad(a)) return;
    auto g = tp.grad(out);
    auto ov = tp.values(out);
    auto ga = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ov[i];
  });
}

Var Tape::relu(Var a) {
  Tensor t(at(a).shape);
  for (std::size_t i = 0; i < t.v.size(); ++i) {
    const bool pos = at(a).v[i] > 0.0;
    t.v[i] = pos ? at(a).v[i] : 0.0;
    mix_branch((static_cast<std::uint64_t>(i) << 1) | (pos ? 1u : 0u));
  }
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a};
  return push("relu", std::move(t), ins, [a, out](Tape& tp) {
    if (!tp.needs_grad(a)) return;
    auto g = tp.grad(out);
    auto av = tp.values(a);
    auto ga = tp.grad_mut(a);
    // derivative at exactly 0 is defined as 0
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i];
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  require(lo < hi, "clamp: lo must be < hi");
  Tensor t(at(a).shape);
  for (std::size_t i = 0; i < t.v.size(); ++i) {
    const double x = at(a).v[i];
    std::uint64_t region = 1;
    if (x < lo) region = 0;
    if (x > hi) region = 2;
    t.v[i] = std::clamp(x, lo, hi);
    mix_branch((static_cast<std::uint64_t>(i) << 2) | region);
  }
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a};
  return push("clamp", std::move(t), ins, [a, lo, hi, out](Tape& tp) {
    if (!tp.needs_grad(a)) return;
    auto g = tp.grad(out);
    auto av = tp.values(a);
    auto ga = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] >= lo && av[i] <= hi) ga[i] += g[i];
  });
}

Var Tape::sum(Var a) {
  Tensor t(TensorShape::scalar());
  double acc = 0.0;
  for (double x : at(a).v) acc += x;
  t.v[0] = acc;
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a};
  return push("sum", std::move(t), ins, [a, out](Tape& tp) {
    if (!tp.needs_grad(a)) return;
    const double g = tp.grad(out)[0];
    auto ga = tp.grad_mut(a);
    for (double& x : ga) x += g;
  });
}

Var Tape::mean(Var a) {
  const double inv = 1.0 / at(a).numel();
  Tensor t(TensorShape::scalar());
  double acc = 0.0;
  for (double x : at(a).v) acc += x;
  t.v[0] = acc * inv;
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a};
  return push("mean", std::move(t), ins, [a, inv, out](Tape& tp) {
    if (!tp.needs_grad(a)) return;
    const double g = tp.grad(out)[0] * inv;
    auto ga = tp.grad_mut(a);
    for (double& x : ga) x += g;
  });
}

Var Tape::dot(Var a, Var b) {
  require(at(a).shape == at(b).shape, "dot: shape mismatch");
  Tensor t(TensorShape::scalar());
  double acc = 0.0;
  for (std::size_t i = 0; i < at(a).v.size(); ++i) acc += at(a).v[i] * at(b).v[i];
  t.v[0] = acc;
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {a, b};
  return push("dot", std::move(t), ins, [a, b, out](Tape& tp) {
    const double g = tp.grad(out)[0];
    if (tp.needs_grad(a)) {
      auto ga = tp.grad_mut(a);
      auto bv = tp.values(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
    }
    if (tp.needs_grad(b)) {
      auto gb = tp.grad_mut(b);
      auto av = tp.values(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
    }
  });
}

// ---------------------------------------------------------------------------
// network layers

Var Tape::conv1d(Var x, Var w, Var b) {
  const TensorShape& xs = at(x).shape;
  const TensorShape& ws = at(w).shape;
  const TensorShape& bs = at(b).shape;
  require(xs.ndim == 2, "conv1d: input must be [channels x length]");
  require(ws.ndim == 3, "conv1d: kernel must be [out x in x k]");
  require(bs.ndim == 1, "conv1d: bias must be [out]");
  const int c_in = xs.extent[0], len = xs.extent[1];
  const int c_out = ws.extent[0], k = ws.extent[2];
  require(ws.extent[1] == c_in, "conv1d: kernel input channels mismatch");
  require(bs.extent[0] == c_out, "conv1d: bias size mismatch");
  require(k % 2 == 1, "conv1d: kernel size must be odd");
  const int pad = (k - 1) / 2;

  Tensor t(TensorShape::mat(c_out, len));
  const double* xv = at(x).v.data();
  const double* wv = at(w).v.data();
  const double* bv = at(b).v.data();
  for (int o = 0; o < c_out; ++o) {
    double* orow = t.v.data() + static_cast<std::size_t>(o) * len;
    for (int j = 0; j < len; ++j) orow[j] = bv[o];
    for (int c = 0; c < c_in; ++c) {
      const double* xrow = xv + static_cast<std::size_t>(c) * len;
      const double* wrow = wv + (static_cast<std::size_t>(o) * c_in + c) * k;
      for (int j = 0; j < len; ++j) {
        const int k0 = std::max(0, pad - j);
        const int k1 = std::min(k, len + pad - j);
        double acc = 0.0;
        for (int kk = k0; kk < k1; ++kk) acc += wrow[kk] * xrow[j + kk - pad];
        orow[j] += acc;
      }
    }
  }

  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {x, w, b};
  return push("conv1d", std::move(t), ins,
              [x, w, b, out, c_in, c_out, len, k, pad](Tape& tp) {
    auto g = tp.grad(out);
    if (tp.needs_grad(b)) {
      auto gb = tp.grad_mut(b);
      for (int o = 0; o < c_out; ++o) {
        double acc = 0.0;
        const double* grow = g.data() + static_cast<std::size_t>(o) * len;
        for (int j = 0; j < len; ++j) acc += grow[j];
        gb[o] += acc;
      }
    }
    if (tp.needs_grad(w)) {
      auto gw = tp.grad_mut(w);
      auto xv = tp.values(x);
      for (int o = 0; o < c_out; ++o) {
        const double* grow = g.data() + static_cast<std::size_t>(o) * len;
        for (int c = 0; c < c_in; ++c) {
          const double* xrow = xv.data() + static_cast<std::size_t>(c) * len;
          double* gwrow = gw.data() + (static_cast<std::size_t>(o) * c_in + c) * k;
          for (int kk = 0; kk < k; ++kk) {
            const int j0 = std::max(0, pad - kk);
            const int j1 = std::min(len, len + pad - kk);
            double acc = 0.0;
            for (int j = j0; j < j1; ++j) acc += grow[j] * xrow[j + kk - pad];
            gwrow[kk] += acc;
          }
        }
      }
    }
    if (tp.needs_grad(x)) {
      auto gx = tp.grad_mut(x);
      auto wv = tp.values(w);
      for (int o = 0; o < c_out; ++o) {
        const double* grow = g.data() + static_cast<std::size_t>(o) * len;
        for (int c = 0; c < c_in; ++c) {
          double* gxrow = gx.data() + static_cast<std::size_t>(c) * len;
          const double* wrow = wv.data() + (static_cast<std::size_t>(o) * c_in + c) * k;
          for (int j = 0; j < len; ++j) {
            const double gj = grow[j];
            if (gj == 0.0) continue;
            const int k0 = std::max(0, pad - j);
            const int k1 = std::min(k, len + pad - j);
            for (int kk = k0; kk < k1; ++kk) gxrow[j + kk - pad] += gj * wrow[kk];
          }
        }
      }
    }
  });
}

Var Tape::linear(Var x, Var w, Var b) {
  const TensorShape& xs = at(x).shape;
  const TensorShape& ws = at(w).shape;
  require(xs.ndim == 1 && ws.ndim == 2 && at(b).shape.ndim == 1,
          "linear: expects x[n], w[m x n], b[m]");
  const int n = xs.extent[0], m = ws.extent[0];
  require(ws.extent[1] == n, "linear: weight columns must match input size");
  require(at(b).shape.extent[0] == m, "linear: bias size mismatch");

  Tensor t(TensorShape::vec(m));
  for (int i = 0; i < m; ++i) {
    double acc = at(b).v[i];
    const double* wrow = at(w).v.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += wrow[j] * at(x).v[j];
    t.v[i] = acc;
  }
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {x, w, b};
  return push("linear", std::move(t), ins, [x, w, b, out, n, m](Tape& tp) {
    auto g = tp.grad(out);
    if (tp.needs_grad(b)) {
      auto gb = tp.grad_mut(b);
      for (int i = 0; i < m; ++i) gb[i] += g[i];
    }
    if (tp.needs_grad(w)) {
      auto gw = tp.grad_mut(w);
      auto xv = tp.values(x);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gw[static_cast<std::size_t>(i) * n + j] += g[i] * xv[j];
    }
    if (tp.needs_grad(x)) {
      auto gx = tp.grad_mut(x);
      auto wv = tp.values(w);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gx[j] += g[i] * wv[static_cast<std::size_t>(i) * n + j];
    }
  });
}

Var Tape::global_avg_pool(Var x) {
  const TensorShape& xs = at(x).shape;
  require(xs.ndim == 2, "global_avg_pool: input must be [channels x length]");
  const int c = xs.extent[0], len = xs.extent[1];
  const double inv = 1.0 / len;
  Tensor t(TensorShape::vec(c));
  for (int i = 0; i < c; ++i) {
    double acc = 0.0;
    const double* row = at(x).v.data() + static_cast<std::size_t>(i) * len;
    for (int j = 0; j < len; ++j) acc += row[j];
    t.v[i] = acc * inv;
  }
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {x};
  return push("global_avg_pool", std::move(t), ins, [x, out, c, len, inv](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    auto g = tp.grad(out);
    auto gx = tp.grad_mut(x);
    for (int i = 0; i < c; ++i) {
      const double gi = g[i] * inv;
      double* row = gx.data() + static_cast<std::size_t>(i) * len;
      for (int j = 0; j < len; ++j) row[j] += gi;
    }
  });
}

Var Tape::adaptive_avg_pool(Var x, int bins) {
  const TensorShape& xs = at(x).shape;
  require(xs.ndim == 2, "adaptive_avg_pool: input must be [channels x length]");
  const int c = xs.extent[0], len = xs.extent[1];
  require(bins >= 1 && bins <= len, "adaptive_avg_pool: bins must be in [1, length]");

  std::vector<int> edges(bins + 1);
  for (int b = 0; b <= bins; ++b)
    edges[b] = static_cast<int>(static_cast<long long>(b) * len / bins);

  Tensor t(TensorShape::vec(c * bins));
  for (int i = 0; i < c; ++i) {
    const double* row = at(x).v.data() + static_cast<std::size_t>(i) * len;
    for (int b = 0; b < bins; ++b) {
      double acc = 0.0;
      for (int j = edges[b]; j < edges[b + 1]; ++j) acc += row[j];
      t.v[static_cast<std::size_t>(i) * bins + b] = acc / (edges[b + 1] - edges[b]);
    }
  }
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {x};
  return push("adaptive_avg_pool", std::move(t), ins,
              [x, out, c, len, bins, edges = std::move(edges)](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    auto g = tp.grad(out);
    auto gx = tp.grad_mut(x);
    for (int i = 0; i < c; ++i) {
      double* row = gx.data() + static_cast<std::size_t>(i) * len;
      for (int b = 0; b < bins; ++b) {
        const double gb = g[static_cast<std::size_t>(i) * bins + b] / (edges[b + 1] - edges[b]);
        for (int j = edges[b]; j < edges[b + 1]; ++j) row[j] += gb;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// views

Var Tape::slice(Var x, int start, int len) {
  const TensorShape& xs = at(x).shape;
  require(xs.ndim == 1, "slice: input must be a vector");
  require(start >= 0 && len >= 1 && start + len <= xs.extent[0], "slice: out of range");
  Tensor t(TensorShape::vec(len));
  std::copy_n(at(x).v.begin() + start, len, t.v.begin());
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {x};
  return push("slice", std::move(t), ins, [x, out, start, len](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    auto g = tp.grad(out);
    auto gx = tp.grad_mut(x);
    for (int i = 0; i < len; ++i) gx[start + i] += g[i];
  });
}

Var Tape::channel_slice(Var x, int first_channel, int count) {
  const TensorShape& xs = at(x).shape;
  require(xs.ndim == 2, "channel_slice: input must be [channels x length]");
  const int c = xs.extent[0], len = xs.extent[1];
  require(first_channel >= 0 && count >= 1 && first_channel + count <= c,
          "channel_slice: out of range");
  Tensor t(TensorShape::mat(count, len));
  std::copy_n(at(x).v.begin() + static_cast<std::size_t>(first_channel) * len,
              static_cast<std::size_t>(count) * len, t.v.begin());
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {x};
  return push("channel_slice", std::move(t), ins,
              [x, out, first_channel, count, len](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    auto g = tp.grad(out);
    auto gx = tp.grad_mut(x);
    const std::size_t off = static_cast<std::size_t>(first_channel) * len;
    for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
  });
}

Var Tape::gather_linear(Var src, Var idx) {
  const TensorShape& ss = at(src).shape;
  const TensorShape& is = at(idx).shape;
  require(ss.ndim == 2, "gather_linear: src must be [channels x length]");
  require(is.ndim == 1, "gather_linear: idx must be a vector");
  const int d = ss.extent[0], t_src = ss.extent[1], n = is.extent[0];
  require(t_src >= 2, "gather_linear: src length must be >= 2");

  std::vector<InterpIndex> where(n);
  Tensor t(TensorShape::mat(d, n));
  for (int j = 0; j < n; ++j) {
    where[j] = interp_index(t_src, at(idx).v[j]);
    mix_branch((static_cast<std::uint64_t>(j) << 20) | static_cast<std::uint64_t>(where[j].i0));
  }
  for (int c = 0; c < d; ++c) {
    const double* row = at(src).v.data() + static_cast<std::size_t>(c) * t_src;
    double* orow = t.v.data() + static_cast<std::size_t>(c) * n;
    for (int j = 0; j < n; ++j) {
      const auto [i0, w] = where[j];
      if (w == 0.0) orow[j] = row[i0];
      else if (w == 1.0) orow[j] = row[i0 + 1];
      else orow[j] = (1.0 - w) * row[i0] + w * row[i0 + 1];
    }
  }
  const Var out{static_cast<std::int32_t>(nodes_.size())};
  const Var ins[] = {src, idx};
  return push("gather_linear", std::move(t), ins,
              [src, idx, out, d, t_src, n, where = std::move(where)](Tape& tp) {
    auto g = tp.grad(out);
    auto sv = tp.values(src);
    if (tp.needs_grad(src)) {
      auto gs = tp.grad_mut(src);
      for (int c = 0; c < d; ++c) {
        double* grow = gs.data() + static_cast<std::size_t>(c) * t_src;
        const double* orow = g.data() + static_cast<std::size_t>(c) * n;
        for (int j = 0; j < n; ++j) {
          const auto [i0, w] = where[j];
          grow[i0] += (1.0 - w) * orow[j];
          grow[i0 + 1] += w * orow[j];
        }
      }
    }
    if (tp.needs_grad(idx)) {
      auto gi = tp.grad_mut(idx);
      for (int j = 0; j < n; ++j) {
        const auto [i0, w] = where[j];
        double acc = 0.0;
        for (int c = 0; c < d; ++c) {
          const double* row = sv.data() + static_cast<std::size_t>(c) * t_src;
          acc += g[static_cast<std::size_t>(c) * n + j] * (row[i0 + 1] - row[i0]);
        }
        gi[j] += acc;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// reverse pass

void Tape::run_backward_from(int top) {
  // Allocate zeroed gradients up front so rules can accumulate blindly.
  for (int i = 0; i <= top; ++i)
    if (nodes_[i].needs && nodes_[i].t.g.empty())
      nodes_[i].t.g.assign(nodes_[i].t.v.size(), 0.0);
  for (int i = top; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs && n.back) n.back(*this);
  }
}

void Tape::backward(Var loss) {
  require(loss.valid() && loss.id < size(), "backward: invalid var");
  require(at(loss).shape.numel() == 1, "backward: loss must be scalar");
  if (!nodes_[loss.id].needs) return;
  grad_mut(loss)[0] = 1.0;
  run_backward_from(loss.id);
}

void Tape::backward_seeded(Var out, std::span<const double> seed) {
  require(out.valid() && out.id < size(), "backward_seeded: invalid var");
  require(seed.size() == at(out).v.size(), "backward_seeded: seed shape mismatch");
  if (!nodes_[out.id].needs) return;
  auto g = grad_mut(out);
  for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
  run_backward_from(out.id);
}

// ---------------------------------------------------------------------------
// gradient checking

GradCheckReport gradcheck(
    const std::function<ProbeResult(const std::vector<std::vector<double>>&)>& probe,
    const std::vector<std::vector<double>>& x0,
    const std::vector<std::vector<double>>& analytic_grads,
    double eps, double tol) {
  require(eps >= 1e-6 && eps <= 1e-3, "gradcheck: eps must be in [1e-6, 1e-3]");
  require(x0.size() == analytic_grads.size(), "gradcheck: leaf count mismatch");

  const ProbeResult center = probe(x0);
  GradCheckReport report;
  std::vector<std::vector<double>> x = x0;
  for (std::size_t leaf = 0; leaf < x.size(); ++leaf) {
    require(x0[leaf].size() == analytic_grads[leaf].size(),
            "gradcheck: gradient shape mismatch");
    for (std::size_t i = 0; i < x[leaf].size(); ++i) {
      const double saved = x[leaf][i];
      x[leaf][i] = saved + eps;
      const ProbeResult plus = probe(x);
      x[leaf][i] = saved - eps;
      const ProbeResult minus = probe(x);
      x[leaf][i] = saved;
      if (plus.branch_hash != center.branch_hash ||
          minus.branch_hash != center.branch_hash) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * eps);
      const double analytic = analytic_grads[leaf][i];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = {static_cast<int>(leaf), static_cast<int>(i), analytic, numeric, rel};
      }
    }
  }
  (void)tol;
  return report;
}

}  // namespace tw
