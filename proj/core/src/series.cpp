#include "tw/series.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "tw/errors.hpp"

namespace tw {

TimeSeries::TimeSeries(int channels_, int length_, double fill)
    : channels(channels_), length(length_),
      data(static_cast<std::size_t>(channels_) * length_, fill) {}

TimeSeries::TimeSeries(int channels_, int length_, std::vector<double> values)
    : channels(channels_), length(length_), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(channels) * length)
    throw InvalidArgument("TimeSeries: data size does not match channels*length");
}

void TimeSeries::validate() const {
  if (length < 2) throw InvariantViolation("TimeSeries: length must be >= 2");
  if (channels < 1) throw InvariantViolation("TimeSeries: needs at least one channel");
  if (data.size() != static_cast<std::size_t>(channels) * length)
    throw InvariantViolation("TimeSeries: data size mismatch");
  for (double v : data)
    if (!std::isfinite(v)) throw InvariantViolation("TimeSeries: non-finite value");
}

void Batch::validate_uniform() const {
  if (samples.empty()) return;
  const int c = samples.front().channels;
  const int t = samples.front().length;
  for (const auto& s : samples)
    if (s.channels != c || s.length != t)
      throw InvalidArgument("Batch: samples must share channel count and length");
}

bool Batch::all_labeled() const {
  return std::all_of(samples.begin(), samples.end(),
                     [](const TimeSeries& s) { return s.label.has_value(); });
}

std::vector<int> Batch::class_ids() const {
  std::set<int> ids;
  for (const auto& s : samples)
    if (s.label) ids.insert(*s.label);
  return {ids.begin(), ids.end()};
}

TimeSeries resample_series(const TimeSeries& s, int new_length) {
  if (new_length < 2) throw InvalidArgument("resample_series: new_length must be >= 2");
  if (new_length == s.length) return s;
  TimeSeries out(s.channels, new_length);
  out.label = s.label;
  const double scale = static_cast<double>(s.length - 1) / (new_length - 1);
  for (int j = 0; j < new_length; ++j) {
    const double u = (j == new_length - 1) ? s.length - 1 : j * scale;
    int i0 = static_cast<int>(std::floor(u));
    i0 = std::clamp(i0, 0, s.length - 2);
    const double w = u - i0;
    for (int c = 0; c < s.channels; ++c)
      out.at(c, j) = (1.0 - w) * s.at(c, i0) + w * s.at(c, i0 + 1);
  }
  return out;
}

TimeSeries znormalize(const TimeSeries& s) {
  const double n = static_cast<double>(s.data.size());
  double mean = 0.0;
  for (double v : s.data) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s.data) var += (v - mean) * (v - mean);
  var /= n;
  TimeSeries out = s;
  const double denom = std::sqrt(std::max(var, 1e-8));
  for (double& v : out.data) v = (v - mean) / denom;
  return out;
}

TimeSeries smooth_series(const TimeSeries& s, int radius) {
  if (radius <= 0) return s;
  TimeSeries out(s.channels, s.length);
  out.label = s.label;
  const auto reflect = [&](int t) {
    if (t < 0) t = -t;
    if (t >= s.length) t = 2 * s.length - 2 - t;
    return std::clamp(t, 0, s.length - 1);
  };
  const double inv = 1.0 / (2 * radius + 1);
  for (int c = 0; c < s.channels; ++c)
    for (int t = 0; t < s.length; ++t) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += s.at(c, reflect(t + k));
      out.at(c, t) = acc * inv;
    }
  return out;
}

double squared_distance(const TimeSeries& a, const TimeSeries& b) {
  if (a.channels != b.channels || a.length != b.length)
    throw InvalidArgument("squared_distance: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc;
}

double euclidean_distance(const TimeSeries& a, const TimeSeries& b) {
  return std::sqrt(squared_distance(a, b));
}

InterpIndex interp_index(int n, double u) {
  const double r = std::nearbyint(u);
  if (std::abs(u - r) <= 32.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(u)))
    u = r;
  if (u <= 0.0) return {0, 0.0};
  if (u >= n - 1) return {n - 2, 1.0};
  const int i0 = std::min(static_cast<int>(u), n - 2);
  return {i0, u - i0};
}

double interp_at(std::span<const double> values, double u) {
  const auto [i0, w] = interp_index(static_cast<int>(values.size()), u);
  if (w == 0.0) return values[i0];
  if (w == 1.0) return values[i0 + 1];
  return (1.0 - w) * values[i0] + w * values[i0 + 1];
}

}  // namespace tw
