#include "tw/warp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tw/errors.hpp"

namespace tw {

namespace {

constexpr double kRawSlopeClamp = 20.0;

void require(bool cond, const char* msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace

Tessellation::Tessellation(int n_cells_, std::vector<double> borders_)
    : n_cells(n_cells_), borders(std::move(borders_)) {
  validate();
}

void Tessellation::validate() const {
  if (n_cells < 1) throw InvalidArgument("Tessellation: n_cells must be >= 1");
  if (static_cast<int>(borders.size()) != n_cells - 1)
    throw InvalidArgument("Tessellation: expected n_cells-1 interior borders");
  double prev = 0.0;
  for (double b : borders) {
    if (!(b > prev && b < 1.0))
      throw InvalidArgument("Tessellation: borders must be strictly increasing inside (0,1)");
    prev = b;
  }
}

int Tessellation::cell_index(double x) const {
  const auto it = std::upper_bound(borders.begin(), borders.end(), x);
  return static_cast<int>(it - borders.begin());
}

double Tessellation::cell_center(int i) const {
  return 0.5 * (cell_left(i) + cell_right(i));
}

Tessellation make_uniform_tessellation(int n_cells) {
  if (n_cells < 1) throw InvalidArgument("make_uniform_tessellation: n_cells must be >= 1");
  std::vector<double> borders(n_cells - 1);
  for (int i = 1; i < n_cells; ++i)
    borders[i - 1] = static_cast<double>(i) / n_cells;
  return Tessellation(n_cells, std::move(borders));
}

std::vector<double> activate_slopes(std::span<const double> raw) {
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) throw NumericError("activate_slopes: non-finite raw slope");
    out[i] = std::exp(std::clamp(raw[i], -kRawSlopeClamp, kRawSlopeClamp));
  }
  return out;
}

std::vector<double> solve_offsets(const Tessellation& tess,
                                  std::span<const double> slopes,
                                  double offset0) {
  require(static_cast<int>(slopes.size()) == tess.n_cells,
          "solve_offsets: slope count must equal n_cells");
  std::vector<double> offsets(slopes.size());
  offsets[0] = offset0;
  for (int i = 1; i < tess.n_cells; ++i)
    offsets[i] = (slopes[i - 1] - slopes[i]) * tess.borders[i - 1] + offsets[i - 1];
  return offsets;
}

CpaVelocityField::CpaVelocityField(Tessellation tess_, std::vector<double> slopes_,
                                   double offset0_)
    : tess(std::move(tess_)), slopes(std::move(slopes_)), offset0(offset0_) {
  offsets = solve_offsets(tess, slopes, offset0);
  validate();
}

void CpaVelocityField::validate() const {
  tess.validate();
  if (static_cast<int>(slopes.size()) != tess.n_cells)
    throw InvalidArgument("CpaVelocityField: slope count must equal n_cells");
  for (double a : slopes)
    if (!(a > 0.0)) throw InvariantViolation("CpaVelocityField: slopes must be > 0");
  // Continuity across borders follows from the offset recursion; check it.
  for (int i = 0; i + 1 < tess.n_cells; ++i) {
    const double tau = tess.borders[i];
    const double left = slopes[i] * tau + offsets[i];
    const double right = slopes[i + 1] * tau + offsets[i + 1];
    const double scale = std::max({std::abs(left), std::abs(right), 1.0});
    if (std::abs(left - right) > 1e-12 * scale)
      throw InvariantViolation("CpaVelocityField: discontinuity at border");
  }
}

double eval_velocity(const CpaVelocityField& field, double x) {
  const int c = field.tess.cell_index(x);
  return field.slopes[c] * x + field.offsets[c];
}

WarpFunction WarpFunction::identity(int grid_size) {
  if (grid_size < 2) throw InvalidArgument("WarpFunction: grid_size must be >= 2");
  WarpFunction w;
  w.values.resize(grid_size);
  for (int j = 0; j < grid_size; ++j)
    w.values[j] = static_cast<double>(j) / (grid_size - 1);
  w.values.back() = 1.0;
  return w;
}

void WarpFunction::validate() const {
  if (values.size() < 2) throw InvariantViolation("WarpFunction: needs >= 2 samples");
  if (values.front() != 0.0 || values.back() != 1.0)
    throw InvariantViolation("WarpFunction: boundary values must be exactly 0 and 1");
  for (std::size_t j = 1; j < values.size(); ++j)
    if (!(values[j] > values[j - 1]))
      throw InvariantViolation("WarpFunction: values must be strictly increasing");
}

std::vector<double> euler_step(std::span<const double> gamma,
                               const CpaVelocityField& field) {
  for (std::size_t j = 1; j < gamma.size(); ++j)
    if (!(gamma[j] > gamma[j - 1]))
      throw InvariantViolation("euler_step: input values must be strictly increasing");
  std::vector<double> out(gamma.size());
  for (std::size_t j = 0; j < gamma.size(); ++j)
    out[j] = gamma[j] + eval_velocity(field, gamma[j]);
  return out;
}

WarpFunction boundary_scale(std::span<const double> gamma_raw) {
  if (gamma_raw.size() < 2) throw InvalidArgument("boundary_scale: needs >= 2 samples");
  const double lo = gamma_raw.front();
  const double range = gamma_raw.back() - lo;
  if (!(range > 1e-12))
    throw NumericError("boundary_scale: degenerate value range");
  WarpFunction w;
  w.values.resize(gamma_raw.size());
  for (std::size_t j = 0; j < gamma_raw.size(); ++j)
    w.values[j] = (gamma_raw[j] - lo) / range;
  w.values.front() = 0.0;
  w.values.back() = 1.0;
  w.validate();
  return w;
}

WarpFunction integrate_warp(std::span<const CpaVelocityField> fields, int grid_size) {
  require(!fields.empty(), "integrate_warp: needs at least one field");
  for (const auto& f : fields)
    require(f.tess == fields.front().tess,
            "integrate_warp: fields must share one tessellation");
  std::vector<double> gamma = WarpFunction::identity(grid_size).values;
  for (const auto& f : fields) gamma = euler_step(gamma, f);
  return boundary_scale(gamma);
}

TimeSeries apply_warp(const TimeSeries& series, const WarpFunction& gamma) {
  const WarpFunction* g = &gamma;
  WarpFunction resampled;
  if (gamma.size() != series.length) {
    resampled.values.resize(series.length);
    const double scale = static_cast<double>(gamma.size() - 1) / (series.length - 1);
    for (int j = 0; j < series.length; ++j)
      resampled.values[j] = interp_at(gamma.values, j * scale);
    resampled.values.front() = 0.0;
    resampled.values.back() = 1.0;
    g = &resampled;
  }
  TimeSeries out(series.channels, series.length);
  out.label = series.label;
  for (int c = 0; c < series.channels; ++c) {
    const std::span<const double> row(series.data.data() + static_cast<std::size_t>(c) * series.length,
                                      static_cast<std::size_t>(series.length));
    for (int j = 0; j < series.length; ++j)
      out.at(c, j) = interp_at(row, g->values[j] * (series.length - 1));
  }
  return out;
}

WarpFunction compose_warps(const WarpFunction& g1, const WarpFunction& g2) {
  require(g1.size() == g2.size(), "compose_warps: grids must match");
  const int n = g1.size();
  WarpFunction out;
  out.values.resize(n);
  for (int j = 0; j < n; ++j)
    out.values[j] = interp_at(g1.values, g2.values[j] * (n - 1));
  out.values.front() = 0.0;
  out.values.back() = 1.0;
  return out;
}

WarpFunction invert_warp(const WarpFunction& gamma) {
  gamma.validate();
  const int n = gamma.size();
  WarpFunction out;
  out.values.resize(n);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    const double q = static_cast<double>(j) / (n - 1);
    while (k + 2 < n && gamma.values[k + 1] < q) ++k;
    const double y0 = gamma.values[k];
    const double y1 = gamma.values[k + 1];
    const double s = (q - y0) / (y1 - y0);
    out.values[j] = (k + std::clamp(s, 0.0, 1.0)) / (n - 1);
  }
  out.values.front() = 0.0;
  out.values.back() = 1.0;
  return out;
}

void warp_to_csv(const WarpFunction& gamma, std::ostream& out) {
  out << "tau,gamma\n";
  char buf[64];
  for (int j = 0; j < gamma.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", gamma.grid_point(j), gamma.values[j]);
    out << buf;
  }
}

std::string warp_to_csv(const WarpFunction& gamma) {
  std::ostringstream ss;
  warp_to_csv(gamma, ss);
  return ss.str();
}

WarpFunction warp_from_csv(std::istream& in) {
  WarpFunction w;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("tau", 0) == 0) continue;  // header
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidArgument("warp_from_csv: expected two columns");
    try {
      w.values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw InvalidArgument("warp_from_csv: non-numeric value");
    }
  }
  w.validate();
  return w;
}

std::string warp_to_json(const WarpFunction& gamma) {
  nlohmann::json j;
  j["grid_size"] = gamma.size();
  j["values"] = gamma.values;
  return j.dump();
}

WarpFunction warp_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  WarpFunction w;
  w.values = j.at("values").get<std::vector<double>>();
  if (j.at("grid_size").get<int>() != w.size())
    throw InvalidArgument("warp_from_json: grid_size does not match values");
  w.validate();
  return w;
}

}  // namespace tw
