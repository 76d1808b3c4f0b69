#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tw/series.hpp"
#include "tw/warp.hpp"

namespace tw {

/// A named train/test split with contiguous class ids 0..n_classes-1 and a
/// common length and channel count.
struct Dataset {
  std::string name;
  Batch train;
  Batch test;
  int n_classes = 0;
  int length = 0;
  int channels = 0;
};

/// UCR-style archive split: one sample per row, class label first, then the
/// sample values, tab- or comma-separated. Labels are remapped to
/// 0..n_classes-1 in ascending order of the original labels. Per-series
/// z-normalization is applied when znorm is set.
Dataset load_ucr(const std::string& train_path, const std::string& test_path,
                 bool znorm = true);

/// Parses one UCR split from a stream (exposed for tests).
Batch parse_ucr_stream(std::istream& in, const std::string& origin, bool znorm);

/// JSON manifest {"sequences": [{"file","label","split"}], "target_length": n}
/// pointing at CSV files of T rows x d columns; paths are relative to the
/// manifest. Every sequence is linearly resampled to the target length
/// (default 50).
Dataset load_multivariate(const std::string& manifest_path);

/// Dataset as a single JSON document; doubles survive a round trip exactly.
std::string dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const std::string& text);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

struct SynthWarpConfig {
  double sigma2 = 10.0;  // variance of the log-derivative field
  int n_harmonics = 10;
  std::uint64_t seed = 0;
};

/// Random diffeomorphic warp: gamma is the normalized cumulative integral
/// (trapezoidal, on the T-grid) of exp(w) where w is a random Fourier
/// series with per-harmonic scale sigma/h. Always strictly increasing with
/// exact endpoints.
WarpFunction synth_warp(const SynthWarpConfig& config, int grid_size);

/// Prototypes warped by random synth_warp draws plus Gaussian noise.
/// Ground-truth warps are kept alongside the samples for recovery checks.
struct SyntheticDataset {
  Dataset data;
  std::vector<WarpFunction> train_warps;  // aligned with data.train.samples
  std::vector<WarpFunction> test_warps;   // aligned with data.test.samples
};

SyntheticDataset make_synthetic_dataset(const Batch& prototypes, int per_class,
                                        const SynthWarpConfig& warp_config,
                                        double noise_std, int per_class_test = 0);

/// Smooth labeled demo prototypes (mixtures of sinusoids), one per class.
Batch make_demo_prototypes(int n_classes, int channels, int length, std::uint64_t seed);

/// CSV with columns split,sample,tau,gamma listing every ground-truth warp.
void warps_to_csv(const SyntheticDataset& ds, std::ostream& out);

/// One sequence as CSV rows of d columns (the multivariate file format).
void series_to_csv(const TimeSeries& s, std::ostream& out);
TimeSeries series_from_csv(std::istream& in, const std::string& origin);

}  // namespace tw
