#include "tw/objectives.hpp"

#include <cmath>
#include <iostream>

#include "tw/errors.hpp"
#include "tw/warp.hpp"

namespace tw {

namespace {

// Lower-triangular Cholesky factor of a row-major SPD matrix.
std::vector<double> cholesky(std::span<const double> a, int n) {
  std::vector<double> l(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= l[static_cast<std::size_t>(i) * n + k] * l[static_cast<std::size_t>(j) * n + k];
      if (i == j) {
        if (s <= 0.0) throw InvalidArgument("cholesky: matrix is not positive definite");
        l[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
      } else {
        l[static_cast<std::size_t>(i) * n + j] = s / l[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  return l;
}

// Inverse of an SPD matrix via its Cholesky factor (column-wise solves).
std::vector<double> spd_inverse(std::span<const double> a, int n) {
  const std::vector<double> l = cholesky(a, n);
  std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> y(n), x(n);
  for (int col = 0; col < n; ++col) {
    for (int i = 0; i < n; ++i) {
      double s = (i == col) ? 1.0 : 0.0;
      for (int k = 0; k < i; ++k) s -= l[static_cast<std::size_t>(i) * n + k] * y[k];
      y[i] = s / l[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = y[i];
      for (int k = i + 1; k < n; ++k) s -= l[static_cast<std::size_t>(k) * n + i] * x[k];
      x[i] = s / l[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i) * n + col] = x[i];
  }
  // Symmetrize to remove round-off skew.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) {
      const double m = 0.5 * (inv[static_cast<std::size_t>(i) * n + j] +
                              inv[static_cast<std::size_t>(j) * n + i]);
      inv[static_cast<std::size_t>(i) * n + j] = m;
      inv[static_cast<std::size_t>(j) * n + i] = m;
    }
  return inv;
}

std::vector<TimeSeries> warp_all(const Batch& batch, const ModelParams& params) {
  std::vector<TimeSeries> warped;
  warped.reserve(batch.samples.size());
  for (const auto& s : batch.samples) warped.push_back(forward(params, s).warped);
  return warped;
}

}  // namespace

SigmaPrior build_sigma(double lambda_var, double lambda_smooth, int n_cells) {
  if (!(lambda_var > 0.0) || !(lambda_smooth > 0.0))
    throw InvalidArgument("build_sigma: lambda_var and lambda_smooth must be > 0");
  if (n_cells < 1) throw InvalidArgument("build_sigma: n_cells must be >= 1");

  SigmaPrior prior;
  prior.lambda_var = lambda_var;
  prior.lambda_smooth = lambda_smooth;
  prior.n_cells = n_cells;

  const Tessellation tess = make_uniform_tessellation(n_cells);
  prior.covariance.assign(static_cast<std::size_t>(n_cells) * n_cells, 0.0);
  const double inv_2s2 = 1.0 / (2.0 * lambda_smooth * lambda_smooth);
  for (int i = 0; i < n_cells; ++i) {
    for (int j = 0; j < n_cells; ++j) {
      const double d = tess.cell_center(i) - tess.cell_center(j);
      double v = lambda_var * std::exp(-d * d * inv_2s2);
      if (i == j) v += 1e-6 * lambda_var;
      prior.covariance[static_cast<std::size_t>(i) * n_cells + j] = v;
    }
  }
  prior.precision = spd_inverse(prior.covariance, n_cells);
  return prior;
}

TimeSeries pair_input(const TimeSeries& query, const TimeSeries& target) {
  if (query.channels != target.channels || query.length != target.length)
    throw InvalidArgument("pair_input: query and target must share shape");
  TimeSeries out(query.channels + target.channels, query.length);
  std::copy(query.data.begin(), query.data.end(), out.data.begin());
  std::copy(target.data.begin(), target.data.end(), out.data.begin() + query.data.size());
  return out;
}

ModelConfig pairwise_config(ModelConfig base, int signal_channels) {
  base.input_channels = 2 * signal_channels;
  base.warp_channels = signal_channels;
  return base;
}

double pairwise_loss(const TimeSeries& f, const TimeSeries& g, const ForwardTrace& trace,
                     double alpha, const SigmaPrior& prior, bool normalized) {
  if (f.channels != g.channels || f.length != g.length)
    throw InvalidArgument("pairwise_loss: f and g must share shape");
  if (trace.warped.channels != f.channels || trace.warped.length != f.length)
    throw InvalidArgument("pairwise_loss: trace output does not match f");
  const double norm = normalized ? 1.0 / (static_cast<double>(f.channels) * f.length) : 1.0;
  double loss = norm * squared_distance(f, trace.warped);
  if (alpha != 0.0) loss += alpha * kinetic_energy(trace, prior.precision);
  return loss;
}

double single_class_loss(std::span<const TimeSeries> warped) {
  if (warped.empty()) throw InvalidArgument("single_class_loss: empty batch");
  const std::size_t numel = warped.front().data.size();
  std::vector<double> mean(numel, 0.0);
  for (const auto& s : warped) {
    if (s.data.size() != numel)
      throw InvalidArgument("single_class_loss: samples must share shape");
    for (std::size_t i = 0; i < numel; ++i) mean[i] += s.data[i];
  }
  const double inv_n = 1.0 / static_cast<double>(warped.size());
  for (double& m : mean) m *= inv_n;
  double acc = 0.0;
  for (const auto& s : warped)
    for (std::size_t i = 0; i < numel; ++i) {
      const double d = s.data[i] - mean[i];
      acc += d * d;
    }
  return acc * inv_n;
}

double multi_class_loss(std::span<const TimeSeries> warped) {
  if (warped.empty()) throw InvalidArgument("multi_class_loss: empty batch");
  std::map<int, std::vector<const TimeSeries*>> by_class;
  for (const auto& s : warped) {
    if (!s.label) throw InvalidArgument("multi_class_loss: sample without label");
    by_class[*s.label].push_back(&s);
  }
  double total = 0.0;
  for (const auto& [label, members] : by_class) {
    std::vector<TimeSeries> group;
    group.reserve(members.size());
    for (const TimeSeries* m : members) group.push_back(*m);
    total += single_class_loss(group);
  }
  return total;
}

std::map<int, TimeSeries> average_sequence(const Batch& batch, const ModelParams& params) {
  if (batch.empty()) throw InvalidArgument("average_sequence: empty batch");
  batch.validate_uniform();
  const std::vector<TimeSeries> warped = warp_all(batch, params);

  std::map<int, std::vector<const TimeSeries*>> by_class;
  const bool labeled = batch.all_labeled();
  if (!labeled && batch.class_ids().size() > 0)
    std::cerr << "average_sequence: partially labeled batch, treating as one class\n";
  for (const auto& s : warped) by_class[labeled ? *s.label : 0].push_back(&s);

  std::map<int, TimeSeries> centroids;
  for (const auto& [label, members] : by_class) {
    TimeSeries mean(members.front()->channels, members.front()->length);
    for (const TimeSeries* m : members)
      for (std::size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += m->data[i];
    const double inv = 1.0 / static_cast<double>(members.size());
    for (double& v : mean.data) v *= inv;
    mean.label = label;
    centroids.emplace(label, std::move(mean));
  }
  return centroids;
}

// ---------------------------------------------------------------------------
// graph builders

Var kinetic_energy_graph(Tape& tape, std::span<const Var> block_slopes,
                         const SigmaPrior& prior) {
  const int n = prior.n_cells;
  const Var prec = tape.constant(TensorShape::mat(n, n), prior.precision);
  const Var zero = tape.constant(TensorShape::vec(n), std::vector<double>(n, 0.0));
  Var total{};
  for (const Var a : block_slopes) {
    const Var quad = tape.dot(a, tape.linear(a, prec, zero));
    total = total.valid() ? tape.add(total, quad) : quad;
  }
  if (!total.valid()) total = tape.scalar_constant(0.0);
  return total;
}

LossVars pairwise_loss_graph(Tape& tape, const ModelGraph& graph, const TimeSeries& f,
                             double alpha, const SigmaPrior& prior, bool normalized) {
  const TensorShape out_shape = tape.at(graph.warped).shape;
  if (out_shape.extent[0] != f.channels || out_shape.extent[1] != f.length)
    throw InvalidArgument("pairwise_loss_graph: target does not match warped output");
  const Var target = tape.constant(out_shape, f.data);
  const Var diff = tape.sub(graph.warped, target);
  Var data = tape.dot(diff, diff);
  if (normalized) data = tape.scale(data, 1.0 / (static_cast<double>(f.channels) * f.length));

  LossVars vars;
  vars.data_term = data;
  vars.reg_term = tape.scale(kinetic_energy_graph(tape, graph.block_slopes, prior), alpha);
  vars.total = tape.add(vars.data_term, vars.reg_term);
  return vars;
}

LossVars joint_loss_graph(Tape& tape, std::span<const ModelGraph> graphs,
                          std::span<const int> labels, double alpha,
                          const SigmaPrior& prior, bool multi_class) {
  if (graphs.empty()) throw InvalidArgument("joint_loss_graph: empty batch");
  if (multi_class && labels.size() != graphs.size())
    throw InvalidArgument("joint_loss_graph: one label per sample required");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < graphs.size(); ++i)
    by_class[multi_class ? labels[i] : 0].push_back(i);

  Var data{};
  for (const auto& [label, members] : by_class) {
    Var sum_warped{};
    for (std::size_t i : members) {
      sum_warped = sum_warped.valid() ? tape.add(sum_warped, graphs[i].warped)
                                      : graphs[i].warped;
    }
    const Var mean = tape.scale(sum_warped, 1.0 / static_cast<double>(members.size()));
    Var class_acc{};
    for (std::size_t i : members) {
      const Var dev = tape.sub(graphs[i].warped, mean);
      const Var sq = tape.dot(dev, dev);
      class_acc = class_acc.valid() ? tape.add(class_acc, sq) : sq;
    }
    const Var class_loss = tape.scale(class_acc, 1.0 / static_cast<double>(members.size()));
    data = data.valid() ? tape.add(data, class_loss) : class_loss;
  }

  Var kin{};
  for (const auto& g : graphs) {
    const Var k = kinetic_energy_graph(tape, g.block_slopes, prior);
    kin = kin.valid() ? tape.add(kin, k) : k;
  }
  LossVars vars;
  vars.data_term = data;
  vars.reg_term = tape.scale(kin, alpha / static_cast<double>(graphs.size()));
  vars.total = tape.add(vars.data_term, vars.reg_term);
  return vars;
}

}  // namespace tw
