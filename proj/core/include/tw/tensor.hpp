#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tw {

/// Up to three dimensions, row-major. Vectors are [n], feature maps are
/// [channels x length], conv kernels are [out x in x k].
struct TensorShape {
  std::array<int, 3> extent{1, 1, 1};
  int ndim = 0;

  static TensorShape scalar() { return {{1, 1, 1}, 0}; }
  static TensorShape vec(int n) { return {{n, 1, 1}, 1}; }
  static TensorShape mat(int rows, int cols) { return {{rows, cols, 1}, 2}; }
  static TensorShape cube(int a, int b, int c) { return {{a, b, c}, 3}; }

  int numel() const { return extent[0] * extent[1] * extent[2]; }
  bool operator==(const TensorShape&) const = default;
  std::string str() const;
};

/// Value plus (lazily allocated) gradient of identical shape.
struct Tensor {
  TensorShape shape;
  std::vector<double> v;
  std::vector<double> g;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(TensorShape shape, double fill = 0.0);
  Tensor(TensorShape shape, std::vector<double> values);

  int numel() const { return shape.numel(); }
};

/// Handle to a node on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Recording tape for reverse-mode differentiation.
///
/// Every operation validates shapes, checks its output for NaN/Inf
/// (throwing NumericError), and registers a backward rule. backward()
/// replays the rules in exact reverse recording order, so gradient
/// accumulation is deterministic. A tape belongs to one evaluation
/// context; independent tapes may run concurrently.
///
/// The tape also folds every data-dependent branch decision (ReLU signs,
/// clamp saturation, interpolation cells) into branch_hash(), which lets
/// the gradient checker detect and exclude kink crossings exactly.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // -- node creation ------------------------------------------------------
  Var leaf(Tensor t);
  Var leaf(TensorShape shape, std::span<const double> values, bool requires_grad);
  Var constant(TensorShape shape, std::span<const double> values);
  Var scalar_constant(double value);

  /// Extension point for composite modules: push a precomputed value with
  /// a custom backward rule. `inputs` determine gradient propagation.
  Var push_node(const char* op, Tensor value, std::span<const Var> inputs,
                std::function<void(Tape&)> backward);

  /// Folds a branch decision into the hash (see class comment).
  void mix_branch(std::uint64_t word);

  // -- access -------------------------------------------------------------
  const Tensor& at(Var x) const { return nodes_[x.id].t; }
  std::span<const double> values(Var x) const { return nodes_[x.id].t.v; }
  double value(Var x) const { return nodes_[x.id].t.v[0]; }
  std::span<const double> grad(Var x) const { return nodes_[x.id].t.g; }
  bool needs_grad(Var x) const { return nodes_[x.id].needs; }
  /// Mutable gradient span; allocates zeros on first use. Intended for
  /// backward rules.
  std::span<double> grad_mut(Var x);
  int size() const { return static_cast<int>(nodes_.size()); }
  std::uint64_t branch_hash() const { return branch_hash_; }

  // -- element-wise and reductions ----------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var exp(Var a);
  Var relu(Var a);
  Var clamp(Var a, double lo, double hi);
  Var sum(Var a);
  Var mean(Var a);
  /// Sum over all (flattened) elements of a_i * b_i; shapes must match.
  Var dot(Var a, Var b);

  // -- network layers -----------------------------------------------------
  /// Cross-correlation with zero same-padding; kernel size must be odd.
  /// x: [c_in x t], w: [c_out x c_in x k], b: [c_out] -> [c_out x t].
  Var conv1d(Var x, Var w, Var b);
  /// x: [n], w: [m x n], b: [m] -> [m].
  Var linear(Var x, Var w, Var b);
  /// x: [c x t] -> [c], mean over time.
  Var global_avg_pool(Var x);
  /// x: [c x t] -> [c*bins], per-channel means over bins contiguous time
  /// segments (bin b covers [b*t/bins, (b+1)*t/bins)). bins == 1 matches
  /// global_avg_pool with the output flattened.
  Var adaptive_avg_pool(Var x, int bins);

  // -- views --------------------------------------------------------------
  Var slice(Var x, int start, int len);                 // vector slice
  Var channel_slice(Var x, int first_channel, int count);  // [c x t] rows

  /// Linear-interpolation gather: src [d x t_src], idx [n] of continuous
  /// positions in [0, t_src-1] -> [d x n]. Back-propagates into both the
  /// source samples and the positions (using the active segment's slope).
  Var gather_linear(Var src, Var idx);

  // -- reverse pass --------------------------------------------------------
  /// Seeds d(loss)/d(loss)=1 on a scalar and accumulates gradients on every
  /// reachable node with needs_grad. Leaves without a path stay zero.
  void backward(Var loss);
  /// Seeds an explicit cotangent on an arbitrary node.
  void backward_seeded(Var out, std::span<const double> seed);

private:
  struct Node {
    Tensor t;
    std::function<void(Tape&)> back;
    bool needs = false;
  };

  Var push(const char* op, Tensor t, std::span<const Var> inputs,
           std::function<void(Tape&)> back);
  void check_finite(const char* op, const Tensor& t) const;
  void run_backward_from(int top);

  std::vector<Node> nodes_;
  std::uint64_t branch_hash_ = 14695981039346656037ull;
};

// -- gradient checking ------------------------------------------------------

/// One evaluation of a scalar function plus the branch decisions taken.
struct ProbeResult {
  double value = 0.0;
  std::uint64_t branch_hash = 0;
};

struct GradCheckEntry {
  int leaf = -1;
  int index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  int checked = 0;
  int skipped_kinks = 0;
  bool passed(double tol) const { return max_rel_error < tol; }
};

/// Central-difference check of analytic gradients.
///
/// probe evaluates the scalar function at the given leaf values. A
/// coordinate whose +/-eps probes change the branch hash sits on a kink
/// (ReLU corner, interpolation cell change) and is excluded. eps must be
/// in [1e-6, 1e-3]. Relative error uses max(1, |analytic|, |numeric|) as
/// denominator.
GradCheckReport gradcheck(
    const std::function<ProbeResult(const std::vector<std::vector<double>>&)>& probe,
    const std::vector<std::vector<double>>& x0,
    const std::vector<std::vector<double>>& analytic_grads,
    double eps, double tol);

}  // namespace tw
