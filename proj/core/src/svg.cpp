#include "tw/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tw/errors.hpp"

namespace tw {

SvgPlot::SvgPlot(int width, int height, std::string title)
    : width_(width), height_(height), title_(std::move(title)) {}

void SvgPlot::add_line(std::span<const double> ys, const std::string& color) {
  Line line;
  line.ys.assign(ys.begin(), ys.end());
  line.xs.resize(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) line.xs[i] = static_cast<double>(i);
  line.color = color;
  lines_.push_back(std::move(line));
}

void SvgPlot::add_line(std::span<const double> xs, std::span<const double> ys,
                       const std::string& color) {
  if (xs.size() != ys.size()) throw InvalidArgument("SvgPlot: x/y size mismatch");
  Line line;
  line.xs.assign(xs.begin(), xs.end());
  line.ys.assign(ys.begin(), ys.end());
  line.color = color;
  lines_.push_back(std::move(line));
}

const char* SvgPlot::palette(int i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % 8];
}

std::string SvgPlot::render() const {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool first = true;
  for (const auto& line : lines_) {
    for (std::size_t i = 0; i < line.xs.size(); ++i) {
      if (first) {
        xmin = xmax = line.xs[i];
        ymin = ymax = line.ys[i];
        first = false;
      }
      xmin = std::min(xmin, line.xs[i]);
      xmax = std::max(xmax, line.xs[i]);
      ymin = std::min(ymin, line.ys[i]);
      ymax = std::max(ymax, line.ys[i]);
    }
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;

  const double margin = 32.0;
  const double pw = width_ - 2 * margin;
  const double ph = height_ - 2 * margin;
  const auto map_x = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * pw; };
  const auto map_y = [&](double y) { return height_ - margin - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width_ << ' '
      << height_ << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << width_ << "\" height=\"" << height_
      << "\" fill=\"white\"/>\n";
  out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
  if (!title_.empty())
    out << "<text x=\"" << width_ / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << title_ << "</text>\n";

  char buf[64];
  for (const auto& line : lines_) {
    out << "<polyline fill=\"none\" stroke=\"" << line.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < line.xs.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.3f,%.3f ", map_x(line.xs[i]), map_y(line.ys[i]));
      out << buf;
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void SvgPlot::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("SvgPlot: cannot open for writing: " + path);
  f << render();
  if (!f) throw IoError("SvgPlot: write failed: " + path);
}

}  // namespace tw
