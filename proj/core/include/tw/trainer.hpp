#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tw/model.hpp"
#include "tw/objectives.hpp"
#include "tw/series.hpp"

namespace tw {

enum class Optimizer { adam, sgd };

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 1000;
  int batch_size = 0;  // 0 = full batch while N <= 256, else stratified batches
  double alpha = 0.1;
  double lambda_var = 1e-2;
  double lambda_smooth = 0.5;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;
  bool normalize_data_term = true;
  // stop when the best total improves by less than early_stop_rel
  // (relatively) for early_stop_patience consecutive epochs
  double early_stop_rel = 1e-8;
  int early_stop_patience = 50;
  // Optional continuation for pairwise fitting: moving-average radii
  // applied to both series, one training stage per entry. The last entry
  // should be 0 so the final stage optimizes the raw objective. Empty
  // disables the schedule.
  std::vector<int> smooth_stages;
  // Pairwise warm start: epochs spent regressing the emitted warp onto the
  // DTW correspondence of (f, g) before optimizing the data term. Steers
  // the flow into the right basin on large deformations; 0 disables.
  int dtw_warmup_epochs = 400;

  void validate() const;
};

struct EpochStat {
  int epoch = 0;
  double data_term = 0.0;
  double reg_term = 0.0;
  double total = 0.0;
  double seconds = 0.0;  // cumulative wall time at the end of the epoch
};

struct TrainReport {
  std::vector<EpochStat> epochs;
  double wall_seconds = 0.0;
  std::string stop_reason;
};

/// Optimizer state, one moment buffer pair per parameter tensor.
struct OptState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

/// p -= lr*g (+ decoupled weight decay when configured).
void sgd_step(std::vector<Tensor*>& params,
              const std::vector<std::vector<double>>& grads,
              OptState& state, const TrainConfig& config);

/// Standard Adam with bias correction; weight decay is decoupled.
void adam_step(std::vector<Tensor*>& params,
               const std::vector<std::vector<double>>& grads,
               OptState& state, const TrainConfig& config);

struct PairwiseFitResult {
  WarpFunction warp;
  ForwardTrace trace;
  ModelParams params;
  TrainReport report;
};

/// Optimizes a fresh model so that the warped query g approaches the
/// target f. The network sees the channel concatenation [g; f] and warps
/// the query channels.
PairwiseFitResult fit_pairwise(const TimeSeries& f, const TimeSeries& g,
                               const ModelConfig& model_config,
                               const TrainConfig& train_config);

struct JointFitResult {
  ModelParams params;
  std::map<int, TimeSeries> centroids;
  TrainReport report;
};

/// Joint alignment training: one network for all samples, within-class
/// variance as the data term. With multi_class false, labels are ignored
/// and the whole batch forms one class.
JointFitResult fit_joint(const Batch& train, const ModelConfig& model_config,
                         const TrainConfig& train_config, bool multi_class);

/// Training curve CSV (epoch, data_term, reg_term, total, seconds).
/// Without include_timing the seconds column is written as 0 so outputs
/// stay byte-identical across runs.
void report_to_csv(const TrainReport& report, std::ostream& out, bool include_timing);

}  // namespace tw
