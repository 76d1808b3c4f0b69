#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tw/series.hpp"

namespace tw {

/// Partition of [0,1] into n_cells closed intervals meeting only at their
/// borders. Only the n_cells-1 interior borders are stored; the outer
/// vertices are fixed at 0 and 1.
struct Tessellation {
  int n_cells = 1;
  std::vector<double> borders;

  Tessellation() = default;
  Tessellation(int n_cells, std::vector<double> borders);

  /// Index of the cell whose affine map applies at x. Points left of the
  /// first border map to cell 0 and points right of the last border to
  /// cell n_cells-1, so the field extends affinely beyond [0,1].
  int cell_index(double x) const;

  /// Center of cell i in [0,1].
  double cell_center(int i) const;

  /// Left/right vertex of cell i.
  double cell_left(int i) const { return i == 0 ? 0.0 : borders[i - 1]; }
  double cell_right(int i) const { return i == n_cells - 1 ? 1.0 : borders[i]; }

  bool operator==(const Tessellation&) const = default;

  void validate() const;
};

/// n_cells equal-width cells.
Tessellation make_uniform_tessellation(int n_cells);

/// Element-wise exp of raw slope parameters; raw values are clamped to
/// [-20, 20] first so the result is always finite and strictly positive.
std::vector<double> activate_slopes(std::span<const double> raw);

/// Offsets b^2..b^{N} from b^1 and the slopes via the border continuity
/// recursion b^{i+1} = (a^i - a^{i+1})·tau_i + b^i.
std::vector<double> solve_offsets(const Tessellation& tess,
                                  std::span<const double> slopes,
                                  double offset0);

/// Continuous piecewise-affine velocity field over a tessellation.
/// Offsets are derived from offset0 at construction and cached.
struct CpaVelocityField {
  Tessellation tess;
  std::vector<double> slopes;  // post-activation, each > 0
  double offset0 = 0.0;        // b^1
  std::vector<double> offsets; // all b^i, derived

  CpaVelocityField() = default;
  CpaVelocityField(Tessellation tess, std::vector<double> slopes, double offset0);

  void validate() const;
};

/// a^{c(x)}·x + b^{c(x)}. Outside [0,1] the nearest cell's affine map
/// extends the field (see Tessellation::cell_index).
double eval_velocity(const CpaVelocityField& field, double x);

/// Monotone map of [0,1] onto itself sampled on the uniform grid
/// tau_j = j/(T-1). A valid WarpFunction is strictly increasing with
/// values[0] = 0 and values[T-1] = 1.
struct WarpFunction {
  std::vector<double> values;

  int size() const { return static_cast<int>(values.size()); }
  double grid_point(int j) const { return static_cast<double>(j) / (size() - 1); }

  static WarpFunction identity(int grid_size);

  /// Throws InvariantViolation if not strictly increasing or boundary-fixing.
  void validate() const;
};

/// One residual flow update: out_j = gamma_j + v(gamma_j). Input must be
/// strictly increasing; output is strictly increasing because every slope
/// is positive. Values are an unscaled intermediate, not a WarpFunction.
std::vector<double> euler_step(std::span<const double> gamma,
                               const CpaVelocityField& field);

/// Affine rescaling of a strictly increasing sample vector onto [0,1].
/// Throws NumericError when the value range is below 1e-12.
WarpFunction boundary_scale(std::span<const double> gamma_raw);

/// Integrates the flow: identity grid, one euler_step per field in order,
/// then a single boundary_scale. All fields must share one tessellation.
WarpFunction integrate_warp(std::span<const CpaVelocityField> fields, int grid_size);

/// Resamples a series at gamma: out(c, j) = s(c, gamma(tau_j)·(T-1)) by
/// linear interpolation. A gamma sampled on a different grid is first
/// resampled to the series length. Exact grid hits are snapped so an
/// identity warp reproduces the input bitwise.
TimeSeries apply_warp(const TimeSeries& series, const WarpFunction& gamma);

/// Pointwise composition (g1 ∘ g2)(tau_j) = g1(g2(tau_j)) on a shared grid.
WarpFunction compose_warps(const WarpFunction& g1, const WarpFunction& g2);

/// Numerical inverse: axis swap plus monotone linear interpolation back
/// onto the uniform grid.
WarpFunction invert_warp(const WarpFunction& gamma);

/// CSV with a header row and two columns: tau,gamma.
void warp_to_csv(const WarpFunction& gamma, std::ostream& out);
std::string warp_to_csv(const WarpFunction& gamma);
WarpFunction warp_from_csv(std::istream& in);

/// JSON record {"grid_size": T, "values": [...]}.
std::string warp_to_json(const WarpFunction& gamma);
WarpFunction warp_from_json(const std::string& text);

}  // namespace tw
