#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tw/series.hpp"
#include "tw/tensor.hpp"
#include "tw/warp.hpp"

namespace tw {

/// Architecture of the residual warping network.
struct ModelConfig {
  int n_blocks = 4;        // residual blocks, one velocity field each
  int kernel_size = 51;    // conv kernel size, odd
  int channels = 128;      // feature channels
  int n_cells = 16;        // tessellation cells
  int pool_bins = 8;       // temporal bins ahead of each projection head
  int input_channels = 1;  // channels fed to the embedding conv
  int warp_channels = 0;   // leading channels resampled by the warp; 0 = all
  std::uint64_t seed = 0;

  int signal_channels() const { return warp_channels > 0 ? warp_channels : input_channels; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ConvLayer {
  Tensor w;  // [out x in x k]
  Tensor b;  // [out]
};

/// Three conv layers forming one residual feature block plus the
/// projection head emitting n_cells raw slopes and b^1.
struct ResidualBlock {
  ConvLayer conv[3];
  Tensor proj_w;  // [(n_cells+1) x channels]
  Tensor proj_b;  // [n_cells+1]
};

struct ModelParams {
  ModelConfig config;
  ConvLayer embed;
  std::vector<ResidualBlock> blocks;
};

/// Xavier-normal conv/embedding weights (variance 2/(fan_in+fan_out)),
/// zero biases. Projection heads start entirely at zero so raw slopes and
/// offsets vanish for any input: every block then contributes v(x)=x and
/// the emitted warp collapses to the exact identity.
ModelParams init_params(const ModelConfig& config);

/// All parameter tensors in fixed declaration order: embedding (w, b),
/// then per block conv0 (w, b), conv1, conv2, projection (w, b).
std::vector<Tensor*> trainable_tensors(ModelParams& params);
std::vector<const Tensor*> trainable_tensors(const ModelParams& params);
int parameter_count(const ModelParams& params);

/// Velocity parameters, intermediate warps (rescaled copies, for
/// diagnostics), the final warp and the warped signal channels.
struct ForwardTrace {
  std::vector<std::vector<double>> block_slopes;  // post-activation a_l
  std::vector<double> block_offset0;              // b^1 per block
  std::vector<WarpFunction> block_warps;
  WarpFunction warp;
  TimeSeries warped;
};

/// Tape handles produced by wire_forward; valid while the tape lives.
struct ModelGraph {
  Var input;
  Var gamma;   // final warp values [t]
  Var warped;  // [signal_channels x t]
  std::vector<Var> block_slopes;
  std::vector<Var> block_offset0s;
  std::vector<Var> block_gammas_raw;  // unscaled intermediates
};

/// Parameter leaves on a tape, aligned with trainable_tensors order.
struct ParamVars {
  std::vector<Var> flat;
};

ParamVars make_param_leaves(Tape& tape, const ModelParams& params, bool requires_grad);

/// Records the full forward pass: embedding conv, residual feature blocks,
/// per-block projections to CPA parameters, flow integration and the final
/// resampling of the signal channels.
ModelGraph wire_forward(Tape& tape, const ModelConfig& config, const ParamVars& vars,
                        const TimeSeries& input);

/// Value-level forward (no gradients kept).
ForwardTrace forward(const ModelParams& params, const TimeSeries& input);

/// Sum over blocks of a_l' * precision * a_l; precision is a row-major
/// n_cells x n_cells matrix.
double kinetic_energy(const ForwardTrace& trace, std::span<const double> precision);

/// Versioned binary container: 4-byte little-endian header length, UTF-8
/// JSON header {config, seed, format_version}, then every parameter tensor
/// as raw little-endian doubles in declaration order.
void save_params(const ModelParams& params, std::ostream& out);
void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(std::istream& in);
ModelParams load_params(const std::string& path);

}  // namespace tw
