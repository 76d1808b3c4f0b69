#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tw/model.hpp"
#include "tw/series.hpp"

namespace tw {

enum class Metric { euclidean, dtw };

/// Dynamic time warping distance: square root of the minimum cumulative
/// squared-Euclidean frame cost over monotone paths with steps
/// {(1,0),(0,1),(1,1)}. window < 0 disables the Sakoe-Chiba band.
double dtw_distance(const TimeSeries& x, const TimeSeries& y, int window = -1);

/// Optimal DTW path as (i, j) frame pairs, from (0,0) to (m-1, n-1).
std::vector<std::pair<int, int>> dtw_path(const TimeSeries& x, const TimeSeries& y,
                                          int window = -1);

/// DTW barycenter averaging. Starts at the Euclidean mean and repeatedly
/// re-associates frames along optimal paths; the summed squared DTW
/// distance to the barycenter is non-increasing across iterations.
TimeSeries dba_barycenter(const Batch& set, int iterations = 10);

/// Sum over members of dtw_distance(member, center)^2.
double dba_objective(const Batch& set, const TimeSeries& center);

struct EvalEntry {
  double accuracy = 0.0;
  // confusion[true_class][predicted_class], indexed by sorted class ids
  std::vector<std::vector<int>> confusion;
  std::vector<int> class_ids;
  double seconds = 0.0;
};

/// One entry per classifier, keyed "ncc", "1nn", "3nn", "5nn".
struct EvalReport {
  std::map<std::string, EvalEntry> entries;
};

std::string eval_report_to_json(const EvalReport& report, bool include_timing);

/// Nearest-centroid classification. When a model is given, every test
/// sample is warped by it first; centroids are used as provided. The
/// metric tag selects Euclidean or DTW distances to the centroids.
EvalReport ncc_classify(const Batch& test, const std::map<int, TimeSeries>& centroids,
                        const ModelParams* model = nullptr,
                        Metric metric = Metric::euclidean);

/// k-nearest-neighbour majority vote (k odd). Ties break by the smaller
/// summed distance, then by the lower class id. When a model is given both
/// test and training samples are warped by it first.
EvalReport knn_classify(const Batch& test, const Batch& train, int k,
                        const ModelParams* model = nullptr,
                        Metric metric = Metric::euclidean);

/// queries x references distances under the chosen metric.
struct DistanceMatrix {
  int n_queries = 0;
  int n_references = 0;
  Metric metric = Metric::euclidean;
  std::vector<double> values;  // row-major

  double at(int q, int r) const { return values[static_cast<std::size_t>(q) * n_references + r]; }
};

DistanceMatrix distance_matrix(const Batch& queries, const Batch& references, Metric metric);
void distance_matrix_to_csv(const DistanceMatrix& m, std::ostream& out);

}  // namespace tw
