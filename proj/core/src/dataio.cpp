#include "tw/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tw/errors.hpp"
#include "tw/random.hpp"

namespace tw {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == '\t' || ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  fields.push_back(field);
  // Trim surrounding spaces; drop fields that were only whitespace.
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  std::erase_if(fields, [](const std::string& f) { return f.empty(); });
  return fields;
}

double parse_double(const std::string& token, const std::string& origin, int row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(origin + ": non-numeric token '" + token + "' in row " +
                          std::to_string(row));
  }
}

void remap_labels(Dataset& ds) {
  std::map<int, int> remap;
  for (const auto& s : ds.train.samples)
    if (s.label) remap.emplace(*s.label, 0);
  for (const auto& s : ds.test.samples)
    if (s.label) remap.emplace(*s.label, 0);
  int next = 0;
  for (auto& [old_label, new_label] : remap) new_label = next++;
  for (auto* batch : {&ds.train, &ds.test})
    for (auto& s : batch->samples)
      if (s.label) s.label = remap.at(*s.label);
  ds.n_classes = next;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

Batch parse_ucr_stream(std::istream& in, const std::string& origin, bool znorm) {
  Batch batch;
  std::string line;
  int row = 0;
  int expected = -1;
  while (std::getline(in, line)) {
    ++row;
    const auto fields = split_row(line);
    if (fields.empty()) continue;
    if (fields.size() < 2)
      throw InvalidArgument(origin + ": row " + std::to_string(row) + " has no values");
    const int t_len = static_cast<int>(fields.size()) - 1;
    if (expected < 0) expected = t_len;
    if (t_len != expected)
      throw InvalidArgument(origin + ": ragged row " + std::to_string(row) + " (" +
                            std::to_string(t_len) + " values, expected " +
                            std::to_string(expected) + ")");
    const double raw_label = parse_double(fields[0], origin, row);
    TimeSeries s(1, t_len);
    for (int j = 0; j < t_len; ++j) s.data[j] = parse_double(fields[j + 1], origin, row);
    s.label = static_cast<int>(std::llround(raw_label));
    if (znorm) {
      const auto label = s.label;
      s = znormalize(s);
      s.label = label;
    }
    batch.samples.push_back(std::move(s));
  }
  return batch;
}

Dataset load_ucr(const std::string& train_path, const std::string& test_path, bool znorm) {
  Dataset ds;
  ds.name = std::filesystem::path(train_path).stem().string();
  {
    std::ifstream f(train_path);
    if (!f) throw IoError("cannot open: " + train_path);
    ds.train = parse_ucr_stream(f, train_path, znorm);
  }
  {
    std::ifstream f(test_path);
    if (!f) throw IoError("cannot open: " + test_path);
    ds.test = parse_ucr_stream(f, test_path, znorm);
  }
  if (ds.train.empty()) throw InvalidArgument(train_path + ": empty training split");
  ds.train.validate_uniform();
  ds.test.validate_uniform();
  if (!ds.test.empty() && ds.test.samples.front().length != ds.train.samples.front().length)
    throw InvalidArgument("load_ucr: train/test length mismatch");
  ds.channels = 1;
  ds.length = ds.train.samples.front().length;
  remap_labels(ds);
  return ds;
}

TimeSeries series_from_csv(std::istream& in, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto fields = split_row(line);
    if (fields.empty()) continue;
    std::vector<double> values;
    values.reserve(fields.size());
    for (const auto& f : fields) values.push_back(parse_double(f, origin, row));
    if (!rows.empty() && values.size() != rows.front().size())
      throw InvalidArgument(origin + ": ragged row " + std::to_string(row));
    rows.push_back(std::move(values));
  }
  if (rows.size() < 2) throw InvalidArgument(origin + ": needs at least two frames");
  const int d = static_cast<int>(rows.front().size());
  const int t_len = static_cast<int>(rows.size());
  TimeSeries s(d, t_len);
  for (int t = 0; t < t_len; ++t)
    for (int c = 0; c < d; ++c) s.at(c, t) = rows[t][c];
  return s;
}

void series_to_csv(const TimeSeries& s, std::ostream& out) {
  char buf[40];
  for (int t = 0; t < s.length; ++t) {
    for (int c = 0; c < s.channels; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.at(c, t));
      out << buf << (c + 1 < s.channels ? "," : "\n");
    }
  }
}

Dataset load_multivariate(const std::string& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(manifest_path + ": bad manifest: " + e.what());
  }
  const int target_length = manifest.value("target_length", 50);
  if (target_length < 2) throw InvalidArgument("load_multivariate: target_length must be >= 2");
  const auto base = std::filesystem::path(manifest_path).parent_path();

  Dataset ds;
  ds.name = manifest.value("name", std::filesystem::path(manifest_path).stem().string());
  ds.length = target_length;
  ds.channels = -1;
  for (const auto& entry : manifest.at("sequences")) {
    const std::string file = entry.at("file").get<std::string>();
    const std::string split = entry.at("split").get<std::string>();
    if (split != "train" && split != "test")
      throw InvalidArgument(manifest_path + ": split must be 'train' or 'test' (" + file + ")");
    const std::string path = (base / file).string();
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    TimeSeries s = series_from_csv(f, path);
    if (ds.channels < 0) ds.channels = s.channels;
    if (s.channels != ds.channels)
      throw InvalidArgument(path + ": inconsistent channel count across files");
    s = resample_series(s, target_length);
    s.label = entry.at("label").get<int>();
    (split == "train" ? ds.train : ds.test).samples.push_back(std::move(s));
  }
  if (ds.train.empty()) throw InvalidArgument(manifest_path + ": no training sequences");
  remap_labels(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// dataset JSON

namespace {

nlohmann::json batch_to_json(const Batch& batch) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : batch.samples) {
    nlohmann::json rows = nlohmann::json::array();
    for (int c = 0; c < s.channels; ++c)
      rows.push_back(std::vector<double>(s.data.begin() + static_cast<std::size_t>(c) * s.length,
                                         s.data.begin() + static_cast<std::size_t>(c + 1) * s.length));
    nlohmann::json item{{"data", rows}};
    if (s.label) item["label"] = *s.label;
    arr.push_back(item);
  }
  return arr;
}

Batch batch_from_json(const nlohmann::json& arr) {
  Batch batch;
  for (const auto& item : arr) {
    const auto& rows = item.at("data");
    const int d = static_cast<int>(rows.size());
    if (d == 0) throw InvalidArgument("dataset json: sample with no channels");
    const int t_len = static_cast<int>(rows.front().size());
    TimeSeries s(d, t_len);
    for (int c = 0; c < d; ++c) {
      const auto row = rows.at(c).get<std::vector<double>>();
      if (static_cast<int>(row.size()) != t_len)
        throw InvalidArgument("dataset json: ragged channels");
      std::copy(row.begin(), row.end(), s.data.begin() + static_cast<std::size_t>(c) * t_len);
    }
    if (item.contains("label")) s.label = item.at("label").get<int>();
    batch.samples.push_back(std::move(s));
  }
  return batch;
}

}  // namespace

std::string dataset_to_json(const Dataset& ds) {
  nlohmann::json j{{"name", ds.name},
                   {"n_classes", ds.n_classes},
                   {"length", ds.length},
                   {"channels", ds.channels},
                   {"train", batch_to_json(ds.train)},
                   {"test", batch_to_json(ds.test)}};
  return j.dump();
}

Dataset dataset_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("dataset json: ") + e.what());
  }
  Dataset ds;
  ds.name = j.at("name").get<std::string>();
  ds.n_classes = j.at("n_classes").get<int>();
  ds.length = j.at("length").get<int>();
  ds.channels = j.at("channels").get<int>();
  ds.train = batch_from_json(j.at("train"));
  ds.test = batch_from_json(j.at("test"));
  ds.train.validate_uniform();
  ds.test.validate_uniform();
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << dataset_to_json(ds);
  if (!f) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) { return dataset_from_json(read_file(path)); }

// ---------------------------------------------------------------------------
// synthetic warps

WarpFunction synth_warp(const SynthWarpConfig& config, int grid_size) {
  if (!(config.sigma2 > 0.0)) throw InvalidArgument("synth_warp: sigma2 must be > 0");
  if (grid_size < 2) throw InvalidArgument("synth_warp: grid_size must be >= 2");
  Rng rng(config.seed);
  const double sigma = std::sqrt(config.sigma2);

  std::vector<double> xi(config.n_harmonics), eta(config.n_harmonics);
  for (int h = 0; h < config.n_harmonics; ++h) {
    xi[h] = rng.normal();
    eta[h] = rng.normal();
  }
  const auto w_field = [&](double t) {
    double acc = 0.0;
    for (int h = 1; h <= config.n_harmonics; ++h) {
      const double phase = 2.0 * std::numbers::pi * h * t;
      acc += sigma * (xi[h - 1] / h) * std::sin(phase) +
             sigma * (eta[h - 1] / h) * std::cos(phase);
    }
    return acc;
  };

  // Normalized cumulative trapezoid of exp(w); the integrand is positive,
  // so the result is strictly increasing.
  std::vector<double> speed(grid_size);
  for (int j = 0; j < grid_size; ++j)
    speed[j] = std::exp(w_field(static_cast<double>(j) / (grid_size - 1)));
  WarpFunction gamma;
  gamma.values.resize(grid_size);
  gamma.values[0] = 0.0;
  for (int j = 1; j < grid_size; ++j)
    gamma.values[j] = gamma.values[j - 1] + 0.5 * (speed[j - 1] + speed[j]);
  const double total = gamma.values.back();
  for (double& v : gamma.values) v /= total;
  gamma.values.front() = 0.0;
  gamma.values.back() = 1.0;
  gamma.validate();
  return gamma;
}

Batch make_demo_prototypes(int n_classes, int channels, int length, std::uint64_t seed) {
  if (n_classes < 1 || channels < 1 || length < 2)
    throw InvalidArgument("make_demo_prototypes: bad shape");
  Rng rng(seed);
  Batch batch;
  for (int k = 0; k < n_classes; ++k) {
    TimeSeries proto(channels, length);
    proto.label = k;
    for (int c = 0; c < channels; ++c) {
      // A few low harmonics per channel: smooth, with timing structure
      // everywhere but a wide basin of attraction for alignment.
      double a1 = rng.normal(), a2 = rng.normal(), a3 = rng.normal();
      double p1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double p3 = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (int t = 0; t < length; ++t) {
        const double u = static_cast<double>(t) / (length - 1);
        proto.at(c, t) = a1 * std::sin(2.0 * std::numbers::pi * u + p1) +
                         a2 * std::sin(4.0 * std::numbers::pi * u + p2) +
                         0.5 * a3 * std::sin(6.0 * std::numbers::pi * u + p3);
      }
    }
    batch.samples.push_back(std::move(proto));
  }
  return batch;
}

SyntheticDataset make_synthetic_dataset(const Batch& prototypes, int per_class,
                                        const SynthWarpConfig& warp_config,
                                        double noise_std, int per_class_test) {
  if (prototypes.empty()) throw InvalidArgument("make_synthetic_dataset: no prototypes");
  if (!prototypes.all_labeled())
    throw InvalidArgument("make_synthetic_dataset: prototypes must be labeled");
  if (per_class < 1) throw InvalidArgument("make_synthetic_dataset: per_class must be >= 1");
  prototypes.validate_uniform();

  SyntheticDataset out;
  out.data.name = "synthetic";
  out.data.channels = prototypes.samples.front().channels;
  out.data.length = prototypes.samples.front().length;

  Rng seeder(warp_config.seed);
  const auto emit = [&](Batch& batch, std::vector<WarpFunction>& warps, int count) {
    for (const auto& proto : prototypes.samples) {
      for (int i = 0; i < count; ++i) {
        SynthWarpConfig wc = warp_config;
        wc.seed = seeder.engine()();
        WarpFunction gamma = synth_warp(wc, proto.length);
        TimeSeries sample = apply_warp(proto, gamma);
        if (noise_std > 0.0)
          for (double& v : sample.data) v += seeder.normal(0.0, noise_std);
        sample.label = proto.label;
        warps.push_back(std::move(gamma));
        batch.samples.push_back(std::move(sample));
      }
    }
  };
  emit(out.data.train, out.train_warps, per_class);
  if (per_class_test > 0) emit(out.data.test, out.test_warps, per_class_test);
  remap_labels(out.data);
  return out;
}

void warps_to_csv(const SyntheticDataset& ds, std::ostream& out) {
  out << "split,sample,tau,gamma\n";
  char buf[96];
  const auto dump = [&](const char* split, const std::vector<WarpFunction>& warps) {
    for (std::size_t i = 0; i < warps.size(); ++i) {
      const auto& w = warps[i];
      for (int j = 0; j < w.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%.17g\n", split, i, w.grid_point(j),
                      w.values[j]);
        out << buf;
      }
    }
  };
  dump("train", ds.train_warps);
  dump("test", ds.test_warps);
}

}  // namespace tw
