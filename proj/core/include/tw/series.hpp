#pragma once

#include <optional>
#include <span>
#include <vector>

namespace tw {

/// A d-channel real-valued sequence sampled on T uniform points of [0,1].
/// Data is row-major: channel c occupies data[c*length .. c*length+length).
struct TimeSeries {
  int channels = 0;
  int length = 0;
  std::vector<double> data;
  std::optional<int> label;

  TimeSeries() = default;
  TimeSeries(int channels, int length, double fill = 0.0);
  TimeSeries(int channels, int length, std::vector<double> values);

  double& at(int c, int t) { return data[static_cast<std::size_t>(c) * length + t]; }
  double at(int c, int t) const { return data[static_cast<std::size_t>(c) * length + t]; }

  /// Throws InvariantViolation on NaN/Inf values or length < 2.
  void validate() const;
};

/// An ordered collection of equally shaped samples; labels are optional
/// and live on the samples themselves.
struct Batch {
  std::vector<TimeSeries> samples;

  bool empty() const { return samples.empty(); }
  int size() const { return static_cast<int>(samples.size()); }
  /// Throws InvalidArgument unless all samples share channels and length.
  void validate_uniform() const;
  bool all_labeled() const;
  /// Distinct labels in ascending order.
  std::vector<int> class_ids() const;
};

/// Linear resampling of every channel to a new length; endpoints are
/// preserved exactly and resampling to the original length is the identity.
TimeSeries resample_series(const TimeSeries& s, int new_length);

/// Per-series z-normalization (mean 0, variance 1 over all channels),
/// guarded by a variance floor of 1e-8 so constant series map to zeros.
TimeSeries znormalize(const TimeSeries& s);

/// Centered moving average of half-width radius per channel with reflected
/// boundaries; radius 0 returns the input unchanged.
TimeSeries smooth_series(const TimeSeries& s, int radius);

/// Sum over channels and frames of squared differences.
double squared_distance(const TimeSeries& a, const TimeSeries& b);

/// sqrt of squared_distance.
double euclidean_distance(const TimeSeries& a, const TimeSeries& b);

/// Linear interpolation of samples at a continuous position u in
/// [0, size-1], clamped at the ends. Positions within a few ulps of a
/// grid index are snapped so exact hits reproduce the sample bitwise.
double interp_at(std::span<const double> values, double u);

/// Segment index and weight behind interp_at: the interpolated value is
/// v[i0] when w == 0, else (1-w)*v[i0] + w*v[i0+1] with i0 in [0, n-2].
struct InterpIndex {
  int i0 = 0;
  double w = 0.0;
};
InterpIndex interp_index(int n, double u);

}  // namespace tw
