#include "tw/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tw/errors.hpp"
#include "tw/random.hpp"
#include "tw/warp_ops.hpp"

namespace tw {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

Tensor xavier_tensor(TensorShape shape, int fan_in, int fan_out, Rng& rng) {
  Tensor t(shape);
  const double stddev = std::sqrt(2.0 / (fan_in + fan_out));
  for (double& x : t.v) x = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

void ModelConfig::validate() const {
  if (n_blocks < 1) throw InvalidArgument("ModelConfig: n_blocks must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw InvalidArgument("ModelConfig: kernel_size must be odd and >= 1");
  if (channels < 1) throw InvalidArgument("ModelConfig: channels must be >= 1");
  if (n_cells < 1) throw InvalidArgument("ModelConfig: n_cells must be >= 1");
  if (pool_bins < 1) throw InvalidArgument("ModelConfig: pool_bins must be >= 1");
  if (input_channels < 1) throw InvalidArgument("ModelConfig: input_channels must be >= 1");
  if (warp_channels < 0 || warp_channels > input_channels)
    throw InvalidArgument("ModelConfig: warp_channels out of range");
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  ModelParams p;
  p.config = config;

  const int c = config.channels;
  const int k = config.kernel_size;
  const int d = config.input_channels;
  p.embed.w = xavier_tensor(TensorShape::cube(c, d, k), d * k, c * k, rng);
  p.embed.b = Tensor(TensorShape::vec(c));

  p.blocks.resize(config.n_blocks);
  for (auto& block : p.blocks) {
    for (auto& layer : block.conv) {
      layer.w = xavier_tensor(TensorShape::cube(c, c, k), c * k, c * k, rng);
      layer.b = Tensor(TensorShape::vec(c));
    }
    block.proj_w = Tensor(TensorShape::mat(config.n_cells + 1, c * config.pool_bins));
    block.proj_b = Tensor(TensorShape::vec(config.n_cells + 1));
  }
  return p;
}

std::vector<Tensor*> trainable_tensors(ModelParams& params) {
  std::vector<Tensor*> out;
  out.push_back(&params.embed.w);
  out.push_back(&params.embed.b);
  for (auto& block : params.blocks) {
    for (auto& layer : block.conv) {
      out.push_back(&layer.w);
      out.push_back(&layer.b);
    }
    out.push_back(&block.proj_w);
    out.push_back(&block.proj_b);
  }
  return out;
}

std::vector<const Tensor*> trainable_tensors(const ModelParams& params) {
  auto mut = trainable_tensors(const_cast<ModelParams&>(params));
  return {mut.begin(), mut.end()};
}

int parameter_count(const ModelParams& params) {
  int n = 0;
  for (const Tensor* t : trainable_tensors(params)) n += t->numel();
  return n;
}

ParamVars make_param_leaves(Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamVars vars;
  for (const Tensor* t : trainable_tensors(params))
    vars.flat.push_back(tape.leaf(t->shape, t->v, requires_grad));
  return vars;
}

ModelGraph wire_forward(Tape& tape, const ModelConfig& config, const ParamVars& vars,
                        const TimeSeries& input) {
  config.validate();
  input.validate();
  if (input.channels != config.input_channels)
    throw InvalidArgument("wire_forward: input channel count does not match config");
  if (input.length < config.pool_bins)
    throw InvalidArgument("wire_forward: input shorter than pool_bins");
  const int t_len = input.length;
  const int n_cells = config.n_cells;
  const Tessellation tess = make_uniform_tessellation(n_cells);

  ModelGraph graph;
  graph.input = tape.constant(TensorShape::mat(input.channels, t_len), input.data);

  std::size_t next = 0;
  const auto take = [&] { return vars.flat.at(next++); };
  const Var embed_w = take();
  const Var embed_b = take();
  Var h = tape.conv1d(graph.input, embed_w, embed_b);

  Var gamma = tape.constant(TensorShape::vec(t_len), WarpFunction::identity(t_len).values);
  for (int l = 0; l < config.n_blocks; ++l) {
    const Var w0 = take(), b0 = take(), w1 = take(), b1 = take(), w2 = take(), b2 = take();
    const Var proj_w = take(), proj_b = take();

    Var f = tape.relu(tape.conv1d(h, w0, b0));
    f = tape.relu(tape.conv1d(f, w1, b1));
    f = tape.conv1d(f, w2, b2);
    h = tape.add(h, f);

    const Var pooled = tape.adaptive_avg_pool(h, config.pool_bins);
    const Var proj = tape.linear(pooled, proj_w, proj_b);
    const Var raw_slopes = tape.slice(proj, 0, n_cells);
    const Var offset0 = tape.slice(proj, n_cells, 1);
    const Var slopes = tape.exp(tape.clamp(raw_slopes, -20.0, 20.0));
    const Var offsets = cpa_offsets_op(tape, slopes, offset0, tess);
    gamma = cpa_euler_step_op(tape, gamma, slopes, offsets, tess);

    graph.block_slopes.push_back(slopes);
    graph.block_offset0s.push_back(offset0);
    graph.block_gammas_raw.push_back(gamma);
  }

  graph.gamma = boundary_scale_op(tape, gamma);
  const int d = config.signal_channels();
  const Var signal = (d == input.channels) ? graph.input
                                           : tape.channel_slice(graph.input, 0, d);
  graph.warped = warp_signal_op(tape, signal, graph.gamma);
  return graph;
}

ForwardTrace forward(const ModelParams& params, const TimeSeries& input) {
  Tape tape;
  const ParamVars vars = make_param_leaves(tape, params, false);
  const ModelGraph graph = wire_forward(tape, params.config, vars, input);

  ForwardTrace trace;
  for (std::size_t l = 0; l < graph.block_slopes.size(); ++l) {
    auto slopes = tape.values(graph.block_slopes[l]);
    trace.block_slopes.emplace_back(slopes.begin(), slopes.end());
    trace.block_offset0.push_back(tape.value(graph.block_offset0s[l]));
    trace.block_warps.push_back(boundary_scale(tape.values(graph.block_gammas_raw[l])));
  }
  trace.warp.values.assign(tape.values(graph.gamma).begin(), tape.values(graph.gamma).end());
  trace.warp.validate();

  const int d = params.config.signal_channels();
  trace.warped = TimeSeries(d, input.length,
                            std::vector<double>(tape.values(graph.warped).begin(),
                                                tape.values(graph.warped).end()));
  trace.warped.label = input.label;
  return trace;
}

double kinetic_energy(const ForwardTrace& trace, std::span<const double> precision) {
  if (trace.block_slopes.empty()) return 0.0;
  const std::size_t n = trace.block_slopes.front().size();
  if (precision.size() != n * n)
    throw InvalidArgument("kinetic_energy: precision must be n_cells x n_cells");
  double total = 0.0;
  for (const auto& a : trace.block_slopes) {
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) row += precision[i * n + j] * a[j];
      total += a[i] * row;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"n_blocks", c.n_blocks},
                        {"kernel_size", c.kernel_size},
                        {"channels", c.channels},
                        {"n_cells", c.n_cells},
                        {"pool_bins", c.pool_bins},
                        {"input_channels", c.input_channels},
                        {"warp_channels", c.warp_channels},
                        {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_blocks = j.at("n_blocks").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.channels = j.at("channels").get<int>();
  c.n_cells = j.at("n_cells").get<int>();
  c.pool_bins = j.at("pool_bins").get<int>();
  c.input_channels = j.at("input_channels").get<int>();
  c.warp_channels = j.at("warp_channels").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void write_le_u32(std::ostream& out, std::uint32_t x) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_le_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw IoError("checkpoint: truncated header length");
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return x;
}

void write_le_double(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double read_le_double(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw IoError("checkpoint: truncated parameter data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_params(const ModelParams& params, std::ostream& out) {
  nlohmann::json header{{"config", config_to_json(params.config)},
                        {"seed", params.config.seed},
                        {"format_version", kFormatVersion}};
  const std::string text = header.dump();
  write_le_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor* t : trainable_tensors(params))
    for (double v : t->v) write_le_double(out, v);
  if (!out) throw IoError("checkpoint: write failed");
}

void save_params(const ModelParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
  save_params(params, f);
}

ModelParams load_params(std::istream& in) {
  const std::uint32_t header_len = read_le_u32(in);
  std::string text(header_len, '\0');
  in.read(text.data(), header_len);
  if (!in) throw IoError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.at("format_version").get<std::uint32_t>() != kFormatVersion)
    throw IoError("checkpoint: unsupported format version");
  const ModelConfig config = config_from_json(header.at("config"));
  config.validate();

  // Allocate with the right shapes, then overwrite every value.
  ModelParams params = init_params(config);
  for (Tensor* t : trainable_tensors(params))
    for (double& v : t->v) v = read_le_double(in);
  // Must now be at end of payload.
  in.peek();
  if (!in.eof()) throw IoError("checkpoint: trailing bytes after parameters");
  return params;
}

ModelParams load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open: " + path);
  return load_params(f);
}

}  // namespace tw
