#include "tw/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

#include "tw/baselines.hpp"
#include "tw/errors.hpp"
#include "tw/random.hpp"

namespace tw {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::scoped_lock lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Reads leaf gradients into buffers aligned with trainable order.
std::vector<std::vector<double>> collect_grads(const Tape& tape, const ParamVars& vars) {
  std::vector<std::vector<double>> grads;
  grads.reserve(vars.flat.size());
  for (const Var v : vars.flat) {
    auto g = tape.grad(v);
    if (g.empty())
      grads.emplace_back(tape.values(v).size(), 0.0);
    else
      grads.emplace_back(g.begin(), g.end());
  }
  return grads;
}

void check_finite_loss(double total, int epoch) {
  if (!std::isfinite(total))
    throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                       " (non-finite loss; try a lower learning rate)");
}

struct EarlyStop {
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;

  bool update(double total, const TrainConfig& c) {
    const bool first = !std::isfinite(best);
    const double improvement = first ? 1.0 : (best - total) / std::max(std::abs(best), 1.0);
    if (improvement > c.early_stop_rel) {
      best = total;
      stale = 0;
    } else {
      ++stale;
    }
    return stale >= c.early_stop_patience;
  }
};

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning_rate must be > 0");
  if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
  if (weight_decay < 0.0) throw InvalidArgument("TrainConfig: weight_decay must be >= 0");
  if (alpha < 0.0) throw InvalidArgument("TrainConfig: alpha must be >= 0");
  if (threads < 1) throw InvalidArgument("TrainConfig: threads must be >= 1");
  if (batch_size < 0) throw InvalidArgument("TrainConfig: batch_size must be >= 0");
}

void sgd_step(std::vector<Tensor*>& params,
              const std::vector<std::vector<double>>& grads,
              OptState& state, const TrainConfig& config) {
  if (grads.size() != params.size()) throw InvalidArgument("sgd_step: gradient count mismatch");
  ++state.step;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t]->v;
    const auto& g = grads[t];
    if (g.size() != p.size()) throw InvalidArgument("sgd_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= config.learning_rate * g[i];
      if (config.weight_decay != 0.0) p[i] -= config.learning_rate * config.weight_decay * p[i];
    }
  }
}

void adam_step(std::vector<Tensor*>& params,
               const std::vector<std::vector<double>>& grads,
               OptState& state, const TrainConfig& config) {
  if (grads.size() != params.size()) throw InvalidArgument("adam_step: gradient count mismatch");
  if (state.m.size() != params.size()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t t = 0; t < params.size(); ++t) {
      state.m[t].assign(params[t]->v.size(), 0.0);
      state.v[t].assign(params[t]->v.size(), 0.0);
    }
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t]->v;
    auto& m = state.m[t];
    auto& v = state.v[t];
    const auto& g = grads[t];
    if (g.size() != p.size()) throw InvalidArgument("adam_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
      if (config.weight_decay != 0.0) p[i] -= config.learning_rate * config.weight_decay * p[i];
    }
  }
}

static void optimizer_step(std::vector<Tensor*>& params,
                           const std::vector<std::vector<double>>& grads,
                           OptState& state, const TrainConfig& config) {
  if (config.optimizer == Optimizer::adam)
    adam_step(params, grads, state, config);
  else
    sgd_step(params, grads, state, config);
}

// ---------------------------------------------------------------------------

namespace {

/// Monotone warp target from the optimal DTW path of (f, g): per target
/// frame the mean matched query position, lightly smoothed and blended
/// with the identity. The blend floors the target slope so the positive
/// slope flow can track it without driving raw slopes into the exp clamp.
std::vector<double> dtw_warp_target(const TimeSeries& f, const TimeSeries& g) {
  const int t_len = f.length;
  std::vector<double> sum(t_len, 0.0);
  std::vector<int> count(t_len, 0);
  for (const auto& [i, j] : dtw_path(f, g)) {
    sum[i] += static_cast<double>(j);
    ++count[i];
  }
  TimeSeries staircase(1, t_len);
  for (int i = 0; i < t_len; ++i)
    staircase.data[i] = sum[i] / (count[i] * static_cast<double>(t_len - 1));
  staircase = smooth_series(staircase, 2);

  constexpr double kIdentityBlend = 0.15;
  std::vector<double> target(t_len);
  for (int i = 0; i < t_len; ++i) {
    const double tau = static_cast<double>(i) / (t_len - 1);
    target[i] = (staircase.data[i] + kIdentityBlend * tau) / (1.0 + kIdentityBlend);
  }
  target.front() = 0.0;
  target.back() = 1.0;
  return target;
}

}  // namespace

PairwiseFitResult fit_pairwise(const TimeSeries& f, const TimeSeries& g,
                               const ModelConfig& model_config,
                               const TrainConfig& train_config) {
  train_config.validate();
  f.validate();
  g.validate();
  if (f.channels != g.channels || f.length != g.length)
    throw InvalidArgument("fit_pairwise: f and g must share shape");

  const ModelConfig config = pairwise_config(model_config, f.channels);
  const SigmaPrior prior =
      build_sigma(train_config.lambda_var, train_config.lambda_smooth, config.n_cells);

  ModelParams params = init_params(config);
  std::vector<Tensor*> tensors = trainable_tensors(params);
  OptState state;
  TrainReport report;
  const auto t0 = Clock::now();

  int epoch = 0;

  // Warm start: steer the emitted warp toward the DTW correspondence.
  if (train_config.dtw_warmup_epochs > 0) {
    const std::vector<double> target = dtw_warp_target(f, g);
    const TimeSeries input = pair_input(g, f);
    EarlyStop stopper;
    for (int e = 0; e < train_config.dtw_warmup_epochs; ++e, ++epoch) {
      Tape tape;
      const ParamVars vars = make_param_leaves(tape, params, true);
      const ModelGraph graph = wire_forward(tape, config, vars, input);
      const Var target_var = tape.constant(TensorShape::vec(f.length), target);
      const Var diff = tape.sub(graph.gamma, target_var);
      const Var track = tape.scale(tape.dot(diff, diff), 1.0 / f.length);
      const Var reg = tape.scale(
          kinetic_energy_graph(tape, graph.block_slopes, prior), train_config.alpha);
      const Var loss = tape.add(track, reg);
      const double total = tape.value(loss);
      check_finite_loss(total, epoch);
      tape.backward(loss);
      const auto grads = collect_grads(tape, vars);
      optimizer_step(tensors, grads, state, train_config);
      report.epochs.push_back({epoch, tape.value(track), tape.value(reg), total,
                               seconds_since(t0)});
      if (stopper.update(total, train_config)) break;
    }
  }

  // Coarse-to-fine continuation: early stages see smoothed copies of both
  // series, the final stage the raw ones.
  std::vector<int> stages = train_config.smooth_stages;
  if (stages.empty()) stages = {0};
  const int per_stage = std::max(1, train_config.epochs / static_cast<int>(stages.size()));
  for (std::size_t si = 0; si < stages.size(); ++si) {
    const bool last_stage = si + 1 == stages.size();
    const TimeSeries f_s = smooth_series(f, stages[si]);
    const TimeSeries g_s = smooth_series(g, stages[si]);
    const TimeSeries input = pair_input(g_s, f_s);
    const int stage_epochs =
        last_stage ? train_config.epochs - per_stage * static_cast<int>(stages.size() - 1)
                   : per_stage;
    EarlyStop stopper;

    for (int e = 0; e < stage_epochs; ++e, ++epoch) {
      Tape tape;
      const ParamVars vars = make_param_leaves(tape, params, true);
      const ModelGraph graph = wire_forward(tape, config, vars, input);
      const LossVars loss = pairwise_loss_graph(tape, graph, f_s, train_config.alpha, prior,
                                                train_config.normalize_data_term);
      const double total = tape.value(loss.total);
      check_finite_loss(total, epoch);
      tape.backward(loss.total);

      const auto grads = collect_grads(tape, vars);
      optimizer_step(tensors, grads, state, train_config);

      report.epochs.push_back({epoch, tape.value(loss.data_term), tape.value(loss.reg_term),
                               total, seconds_since(t0)});
      if (stopper.update(total, train_config)) {
        if (last_stage) report.stop_reason = "converged";
        break;
      }
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max epochs";
  report.wall_seconds = seconds_since(t0);

  PairwiseFitResult result;
  result.trace = forward(params, pair_input(g, f));
  result.warp = result.trace.warp;
  result.params = std::move(params);
  result.report = std::move(report);
  return result;
}

// ---------------------------------------------------------------------------

namespace {

/// Index groups per batch; every class with >= 2 members is split into
/// chunks of at least two so per-class means stay meaningful.
std::vector<std::vector<int>> make_batches(const Batch& data, bool multi_class,
                                           int batch_size, Rng& rng) {
  const int n = data.size();
  if (batch_size <= 0 || batch_size >= n) {
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    return {all};
  }
  const int n_batches = (n + batch_size - 1) / batch_size;

  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < n; ++i)
    by_class[multi_class ? data.samples[i].label.value_or(0) : 0].push_back(i);

  std::vector<std::vector<int>> batches(n_batches);
  for (auto& [label, members] : by_class) {
    // Fisher-Yates with the shared stream keeps runs reproducible.
    for (int i = static_cast<int>(members.size()) - 1; i > 0; --i)
      std::swap(members[i], members[rng.index(i + 1)]);
    const int usable = std::max(1, std::min<int>(n_batches, static_cast<int>(members.size()) / 2));
    for (std::size_t j = 0; j < members.size(); ++j)
      batches[j % usable].push_back(members[j]);
  }
  std::erase_if(batches, [](const auto& b) { return b.empty(); });
  return batches;
}

}  // namespace

JointFitResult fit_joint(const Batch& train, const ModelConfig& model_config,
                         const TrainConfig& train_config, bool multi_class) {
  train_config.validate();
  if (train.empty()) throw InvalidArgument("fit_joint: empty training set");
  train.validate_uniform();
  if (multi_class && !train.all_labeled())
    throw InvalidArgument("fit_joint: multi-class training requires labels on every sample");

  ModelConfig config = model_config;
  config.input_channels = train.samples.front().channels;
  config.warp_channels = 0;
  const SigmaPrior prior =
      build_sigma(train_config.lambda_var, train_config.lambda_smooth, config.n_cells);

  ModelParams params = init_params(config);
  std::vector<Tensor*> tensors = trainable_tensors(params);
  OptState state;
  TrainReport report;
  EarlyStop stopper;
  Rng batch_rng(train_config.seed ^ 0x9e3779b97f4a7c15ull);
  const int n = train.size();
  const int batch_size = (train_config.batch_size > 0) ? train_config.batch_size
                         : (n <= 256 ? 0 : 256);
  const auto t0 = Clock::now();

  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    const auto batches = make_batches(train, multi_class, batch_size, batch_rng);
    double epoch_data = 0.0, epoch_reg = 0.0;

    for (const auto& batch_idx : batches) {
      const int bn = static_cast<int>(batch_idx.size());
      std::vector<std::unique_ptr<Tape>> tapes(bn);
      std::vector<ParamVars> vars(bn);
      std::vector<ModelGraph> graphs(bn);

      parallel_for(bn, train_config.threads, [&](int i) {
        tapes[i] = std::make_unique<Tape>();
        vars[i] = make_param_leaves(*tapes[i], params, true);
        graphs[i] = wire_forward(*tapes[i], config, vars[i], train.samples[batch_idx[i]]);
      });

      // Class means over the warped batch members.
      std::map<int, std::vector<int>> by_class;
      for (int i = 0; i < bn; ++i) {
        const int label = multi_class ? *train.samples[batch_idx[i]].label : 0;
        by_class[label].push_back(i);
      }
      const std::size_t numel = tapes[0]->values(graphs[0].warped).size();
      std::map<int, std::vector<double>> means;
      for (const auto& [label, members] : by_class) {
        std::vector<double> mean(numel, 0.0);
        for (int i : members) {
          auto w = tapes[i]->values(graphs[i].warped);
          for (std::size_t j = 0; j < numel; ++j) mean[j] += w[j];
        }
        for (double& v : mean) v /= static_cast<double>(members.size());
        means.emplace(label, std::move(mean));
      }

      // Per-sample backward. The seed (2/N_k)(g_i - mean_k) is the exact
      // derivative of the within-class data term; the mean-coupling
      // contribution cancels identically.
      double batch_data = 0.0;
      std::vector<double> sample_kinetic(bn, 0.0);
      std::vector<std::vector<std::vector<double>>> slot_grads(bn);
      parallel_for(bn, train_config.threads, [&](int i) {
        Tape& tape = *tapes[i];
        const int label = multi_class ? *train.samples[batch_idx[i]].label : 0;
        const auto& mean = means.at(label);
        const double inv_nk = 1.0 / static_cast<double>(by_class.at(label).size());
        auto w = tape.values(graphs[i].warped);
        std::vector<double> seed(numel);
        for (std::size_t j = 0; j < numel; ++j)
          seed[j] = 2.0 * inv_nk * (w[j] - mean[j]);

        const TensorShape shape = tape.at(graphs[i].warped).shape;
        const Var seed_const = tape.constant(shape, seed);
        const Var data_part = tape.dot(graphs[i].warped, seed_const);
        const Var kin = kinetic_energy_graph(tape, graphs[i].block_slopes, prior);
        sample_kinetic[i] = tape.value(kin);
        const Var loss = tape.add(
            data_part, tape.scale(kin, train_config.alpha / static_cast<double>(bn)));
        tape.backward(loss);
        slot_grads[i] = collect_grads(tape, vars[i]);
      });

      for (const auto& [label, members] : by_class) {
        const auto& mean = means.at(label);
        double acc = 0.0;
        for (int i : members) {
          auto w = tapes[i]->values(graphs[i].warped);
          for (std::size_t j = 0; j < numel; ++j) {
            const double d = w[j] - mean[j];
            acc += d * d;
          }
        }
        batch_data += acc / static_cast<double>(members.size());
      }
      double batch_kin = 0.0;
      for (double k : sample_kinetic) batch_kin += k;
      const double batch_reg = train_config.alpha * batch_kin / static_cast<double>(bn);

      // Ordered reduction over samples keeps the update deterministic for
      // any thread count.
      std::vector<std::vector<double>> grads = std::move(slot_grads[0]);
      for (int i = 1; i < bn; ++i)
        for (std::size_t t = 0; t < grads.size(); ++t)
          for (std::size_t j = 0; j < grads[t].size(); ++j)
            grads[t][j] += slot_grads[i][t][j];

      check_finite_loss(batch_data + batch_reg, epoch);
      optimizer_step(tensors, grads, state, train_config);
      epoch_data += batch_data;
      epoch_reg += batch_reg;
    }

    const double nb = static_cast<double>(batches.size());
    const double total = (epoch_data + epoch_reg) / nb;
    check_finite_loss(total, epoch);
    report.epochs.push_back({epoch, epoch_data / nb, epoch_reg / nb, total, seconds_since(t0)});
    if (stopper.update(total, train_config)) {
      report.stop_reason = "converged";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max epochs";
  report.wall_seconds = seconds_since(t0);

  JointFitResult result;
  result.centroids = average_sequence(train, params);
  result.params = std::move(params);
  result.report = std::move(report);
  return result;
}

void report_to_csv(const TrainReport& report, std::ostream& out, bool include_timing) {
  out << "epoch,data_term,reg_term,total,seconds\n";
  char buf[160];
  for (const auto& e : report.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.data_term,
                  e.reg_term, e.total, include_timing ? e.seconds : 0.0);
    out << buf;
  }
}

}  // namespace tw
