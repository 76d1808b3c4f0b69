#include "tw/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "tw/errors.hpp"

namespace tw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double frame_cost(const TimeSeries& x, int i, const TimeSeries& y, int j) {
  double acc = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    const double d = x.at(c, i) - y.at(c, j);
    acc += d * d;
  }
  return acc;
}

/// Cumulative-cost table of the standard DTW recursion, row-major (m x n).
std::vector<double> dtw_table(const TimeSeries& x, const TimeSeries& y, int window) {
  if (x.channels != y.channels)
    throw InvalidArgument("dtw: channel count mismatch");
  const int m = x.length, n = y.length;
  std::vector<double> d(static_cast<std::size_t>(m) * n, kInf);
  const auto in_band = [&](int i, int j) {
    return window < 0 || std::abs(i - j) <= window;
  };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!in_band(i, j)) continue;
      const double cost = frame_cost(x, i, y, j);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = kInf;
        if (i > 0) best = std::min(best, d[static_cast<std::size_t>(i - 1) * n + j]);
        if (j > 0) best = std::min(best, d[static_cast<std::size_t>(i) * n + j - 1]);
        if (i > 0 && j > 0) best = std::min(best, d[static_cast<std::size_t>(i - 1) * n + j - 1]);
      }
      d[static_cast<std::size_t>(i) * n + j] = cost + best;
    }
  }
  return d;
}

}  // namespace

double dtw_distance(const TimeSeries& x, const TimeSeries& y, int window) {
  const auto d = dtw_table(x, y, window);
  const double total = d.back();
  if (!std::isfinite(total)) throw InvalidArgument("dtw: band too narrow for lengths");
  return std::sqrt(total);
}

std::vector<std::pair<int, int>> dtw_path(const TimeSeries& x, const TimeSeries& y,
                                          int window) {
  const auto d = dtw_table(x, y, window);
  const int m = x.length, n = y.length;
  if (!std::isfinite(d.back())) throw InvalidArgument("dtw: band too narrow for lengths");
  std::vector<std::pair<int, int>> path;
  int i = m - 1, j = n - 1;
  path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    double best = kInf;
    int bi = i, bj = j;
    // Preference order diag, up, left fixes ties deterministically.
    if (i > 0 && j > 0 && d[static_cast<std::size_t>(i - 1) * n + j - 1] < best) {
      best = d[static_cast<std::size_t>(i - 1) * n + j - 1];
      bi = i - 1;
      bj = j - 1;
    }
    if (i > 0 && d[static_cast<std::size_t>(i - 1) * n + j] < best) {
      best = d[static_cast<std::size_t>(i - 1) * n + j];
      bi = i - 1;
      bj = j;
    }
    if (j > 0 && d[static_cast<std::size_t>(i) * n + j - 1] < best) {
      bi = i;
      bj = j - 1;
    }
    i = bi;
    j = bj;
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

double dba_objective(const Batch& set, const TimeSeries& center) {
  double acc = 0.0;
  for (const auto& s : set.samples) {
    const double d = dtw_distance(s, center);
    acc += d * d;
  }
  return acc;
}

TimeSeries dba_barycenter(const Batch& set, int iterations) {
  if (set.empty()) throw InvalidArgument("dba_barycenter: empty set");
  set.validate_uniform();
  const int channels = set.samples.front().channels;
  const int len = set.samples.front().length;

  // Euclidean-mean initialization.
  TimeSeries center(channels, len);
  for (const auto& s : set.samples)
    for (std::size_t i = 0; i < center.data.size(); ++i) center.data[i] += s.data[i];
  for (double& v : center.data) v /= static_cast<double>(set.size());

  for (int it = 0; it < iterations; ++it) {
    std::vector<double> sums(static_cast<std::size_t>(channels) * len, 0.0);
    std::vector<int> counts(len, 0);
    for (const auto& s : set.samples) {
      for (const auto& [i, j] : dtw_path(s, center)) {
        // frame i of the member is associated with barycenter frame j
        for (int c = 0; c < channels; ++c)
          sums[static_cast<std::size_t>(c) * len + j] += s.at(c, i);
        ++counts[j];
      }
    }
    for (int j = 0; j < len; ++j) {
      if (counts[j] == 0) continue;  // unreachable: every column is visited
      for (int c = 0; c < channels; ++c)
        center.at(c, j) = sums[static_cast<std::size_t>(c) * len + j] / counts[j];
    }
  }
  return center;
}

// ---------------------------------------------------------------------------
// classification

namespace {

using Clock = std::chrono::steady_clock;

TimeSeries maybe_warp(const TimeSeries& s, const ModelParams* model) {
  if (!model) return s;
  TimeSeries input = s;
  if (input.length != 0 && model->config.input_channels != input.channels)
    throw InvalidArgument("classify: sample channels do not match model");
  return forward(*model, input).warped;
}

double measure(const TimeSeries& a, const TimeSeries& b, Metric metric) {
  return metric == Metric::euclidean ? euclidean_distance(a, b) : dtw_distance(a, b);
}

EvalEntry make_entry(const std::vector<int>& class_ids, const std::vector<int>& truth,
                     const std::vector<int>& predicted, double seconds) {
  EvalEntry entry;
  entry.class_ids = class_ids;
  entry.seconds = seconds;
  const int k = static_cast<int>(class_ids.size());
  entry.confusion.assign(k, std::vector<int>(k, 0));
  const auto index_of = [&](int label) {
    const auto it = std::lower_bound(class_ids.begin(), class_ids.end(), label);
    if (it == class_ids.end() || *it != label) return -1;
    return static_cast<int>(it - class_ids.begin());
  };
  int correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == predicted[i]) ++correct;
    const int ti = index_of(truth[i]);
    const int pi = index_of(predicted[i]);
    if (ti >= 0 && pi >= 0) ++entry.confusion[ti][pi];
  }
  entry.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / truth.size();
  return entry;
}

}  // namespace

EvalReport ncc_classify(const Batch& test, const std::map<int, TimeSeries>& centroids,
                        const ModelParams* model, Metric metric) {
  if (centroids.empty()) throw InvalidArgument("ncc_classify: no centroids");
  if (test.empty()) throw InvalidArgument("ncc_classify: empty test set");
  const auto t0 = Clock::now();

  const int centroid_len = centroids.begin()->second.length;
  std::vector<int> truth, predicted;
  std::vector<int> class_ids;
  for (const auto& [label, c] : centroids) {
    class_ids.push_back(label);
    if (c.length != centroid_len)
      throw InvalidArgument("ncc_classify: centroids must share length");
  }

  for (const auto& sample : test.samples) {
    if (!sample.label) throw InvalidArgument("ncc_classify: unlabeled test sample");
    TimeSeries s = sample.length == centroid_len ? sample : resample_series(sample, centroid_len);
    s = maybe_warp(s, model);
    if (s.length != centroid_len)
      throw InvalidArgument("ncc_classify: length mismatch after resampling");
    double best = kInf;
    int best_label = class_ids.front();
    for (const auto& [label, c] : centroids) {
      if (s.channels != c.channels)
        throw InvalidArgument("ncc_classify: channel mismatch with centroid");
      const double d = measure(s, c, metric);
      if (d < best) {
        best = d;
        best_label = label;
      }
    }
    truth.push_back(*sample.label);
    predicted.push_back(best_label);
  }

  EvalReport report;
  report.entries["ncc"] =
      make_entry(class_ids, truth, predicted,
                 std::chrono::duration<double>(Clock::now() - t0).count());
  return report;
}

EvalReport knn_classify(const Batch& test, const Batch& train, int k,
                        const ModelParams* model, Metric metric) {
  if (train.empty()) throw InvalidArgument("knn_classify: empty training set");
  if (k < 1 || k % 2 == 0) throw InvalidArgument("knn_classify: k must be odd and >= 1");
  if (k > train.size()) throw InvalidArgument("knn_classify: k exceeds training size");
  if (!train.all_labeled()) throw InvalidArgument("knn_classify: unlabeled training sample");
  const auto t0 = Clock::now();

  std::vector<TimeSeries> train_warped;
  train_warped.reserve(train.samples.size());
  for (const auto& s : train.samples) train_warped.push_back(maybe_warp(s, model));

  std::vector<int> truth, predicted;
  for (const auto& sample : test.samples) {
    if (!sample.label) throw InvalidArgument("knn_classify: unlabeled test sample");
    TimeSeries s = sample.length == train.samples.front().length
                       ? sample
                       : resample_series(sample, train.samples.front().length);
    s = maybe_warp(s, model);

    std::vector<std::pair<double, int>> dist;  // (distance, train index)
    dist.reserve(train_warped.size());
    for (std::size_t i = 0; i < train_warped.size(); ++i)
      dist.emplace_back(measure(s, train_warped[i], metric), static_cast<int>(i));
    std::stable_sort(dist.begin(), dist.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    std::map<int, std::pair<int, double>> votes;  // label -> (count, summed distance)
    for (int i = 0; i < k; ++i) {
      const int label = *train.samples[dist[i].second].label;
      auto& [count, sum] = votes[label];
      ++count;
      sum += dist[i].first;
    }
    int best_label = votes.begin()->first;
    for (const auto& [label, cs] : votes) {
      const auto& best = votes.at(best_label);
      if (cs.first > best.first ||
          (cs.first == best.first && cs.second < best.second) ||
          (cs.first == best.first && cs.second == best.second && label < best_label))
        best_label = label;
    }
    truth.push_back(*sample.label);
    predicted.push_back(best_label);
  }

  std::vector<int> class_ids = train.class_ids();
  for (int t : truth)
    if (!std::binary_search(class_ids.begin(), class_ids.end(), t)) {
      class_ids.push_back(t);
      std::sort(class_ids.begin(), class_ids.end());
    }

  EvalReport report;
  report.entries[std::to_string(k) + "nn"] =
      make_entry(class_ids, truth, predicted,
                 std::chrono::duration<double>(Clock::now() - t0).count());
  return report;
}

DistanceMatrix distance_matrix(const Batch& queries, const Batch& references, Metric metric) {
  DistanceMatrix m;
  m.n_queries = queries.size();
  m.n_references = references.size();
  m.metric = metric;
  m.values.resize(static_cast<std::size_t>(m.n_queries) * m.n_references);
  for (int q = 0; q < m.n_queries; ++q)
    for (int r = 0; r < m.n_references; ++r)
      m.values[static_cast<std::size_t>(q) * m.n_references + r] =
          measure(queries.samples[q], references.samples[r], metric);
  return m;
}

void distance_matrix_to_csv(const DistanceMatrix& m, std::ostream& out) {
  char buf[40];
  for (int q = 0; q < m.n_queries; ++q) {
    for (int r = 0; r < m.n_references; ++r) {
      std::snprintf(buf, sizeof(buf), "%.17g", m.at(q, r));
      out << buf << (r + 1 < m.n_references ? "," : "\n");
    }
  }
}

std::string eval_report_to_json(const EvalReport& report, bool include_timing) {
  nlohmann::json j;
  for (const auto& [name, entry] : report.entries) {
    nlohmann::json e;
    e["accuracy"] = entry.accuracy;
    e["class_ids"] = entry.class_ids;
    e["confusion"] = entry.confusion;
    if (include_timing) e["seconds"] = entry.seconds;
    j[name] = e;
  }
  return j.dump(2);
}

}  // namespace tw
