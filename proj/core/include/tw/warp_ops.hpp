#pragma once

#include "tw/tensor.hpp"
#include "tw/warp.hpp"

namespace tw {

/// Differentiable counterparts of the flow-integration kernels, recorded
/// on a Tape. Forward values match the plain warp functions exactly.

/// Border-continuity offsets from positive slopes [n_cells] and b^1 [1].
Var cpa_offsets_op(Tape& tape, Var slopes, Var offset0, const Tessellation& tess);

/// One flow update: out_j = gamma_j + a_{c(gamma_j)}·gamma_j + b_{c(gamma_j)}.
Var cpa_euler_step_op(Tape& tape, Var gamma, Var slopes, Var offsets,
                      const Tessellation& tess);

/// Affine rescaling of a strictly increasing vector onto [0,1].
Var boundary_scale_op(Tape& tape, Var gamma_raw);

/// Resamples signal [d x t] at warp positions gamma [t] in [0,1]:
/// gather_linear at gamma*(t-1).
Var warp_signal_op(Tape& tape, Var signal, Var gamma);

}  // namespace tw
