#pragma once

#include <map>
#include <span>

#include "tw/model.hpp"
#include "tw/series.hpp"
#include "tw/tensor.hpp"

namespace tw {

/// Smoothness prior over per-block slope vectors: a squared-exponential
/// covariance over cell centers whose correlations decay with inter-cell
/// distance. lambda_var scales the overall variance, lambda_smooth the
/// correlation length. A jitter of 1e-6*lambda_var on the diagonal keeps
/// the factorization well posed.
struct SigmaPrior {
  double lambda_var = 1e-2;
  double lambda_smooth = 0.5;
  int n_cells = 1;
  std::vector<double> covariance;  // row-major n_cells x n_cells
  std::vector<double> precision;   // its inverse
};

SigmaPrior build_sigma(double lambda_var, double lambda_smooth, int n_cells);

/// Channel concatenation [query; target] used in pairwise mode. Only the
/// query channels are warped, so a matching ModelConfig has
/// input_channels = 2d and warp_channels = d.
TimeSeries pair_input(const TimeSeries& query, const TimeSeries& target);

/// ModelConfig for pairwise alignment of d-channel series.
ModelConfig pairwise_config(ModelConfig base, int signal_channels);

/// (1/(dT))·||f - warped||^2 + alpha · kinetic energy. Set normalized to
/// false to drop the 1/(dT) factor.
double pairwise_loss(const TimeSeries& f, const TimeSeries& g, const ForwardTrace& trace,
                     double alpha, const SigmaPrior& prior, bool normalized = true);

/// Mean squared deviation of warped samples from their mean. Labels are
/// ignored; samples ride with the labels they carry.
double single_class_loss(std::span<const TimeSeries> warped);

/// Sum over classes of within-class mean squared deviation. Every sample
/// must be labeled.
double multi_class_loss(std::span<const TimeSeries> warped);

/// Per-class arithmetic mean of the warped samples. An unlabeled batch is
/// treated as one class with id 0.
std::map<int, TimeSeries> average_sequence(const Batch& batch, const ModelParams& params);

// -- graph builders ----------------------------------------------------------

struct LossVars {
  Var total;
  Var data_term;
  Var reg_term;
};

/// Sum over blocks of a_l' * precision * a_l on the tape.
Var kinetic_energy_graph(Tape& tape, std::span<const Var> block_slopes,
                         const SigmaPrior& prior);

LossVars pairwise_loss_graph(Tape& tape, const ModelGraph& graph, const TimeSeries& f,
                             double alpha, const SigmaPrior& prior, bool normalized = true);

/// Full coupled joint loss over per-sample forward graphs on one tape:
/// data term per class plus alpha times the mean per-sample kinetic energy.
/// With multi_class false all samples form one class.
LossVars joint_loss_graph(Tape& tape, std::span<const ModelGraph> graphs,
                          std::span<const int> labels, double alpha,
                          const SigmaPrior& prior, bool multi_class);

}  // namespace tw
