#pragma once

#include <span>
#include <string>
#include <vector>

namespace tw {

/// Minimal SVG line-plot emitter: fixed viewBox, one polyline per series,
/// no timestamps or external resources, so output bytes depend only on the
/// data added.
class SvgPlot {
public:
  SvgPlot(int width = 720, int height = 400, std::string title = "");

  /// Polyline over sample index (x = 0..n-1).
  void add_line(std::span<const double> ys, const std::string& color);
  /// Polyline over explicit x positions.
  void add_line(std::span<const double> xs, std::span<const double> ys,
                const std::string& color);

  /// Cycling default palette entry.
  static const char* palette(int i);

  std::string render() const;
  void save(const std::string& path) const;

private:
  struct Line {
    std::vector<double> xs, ys;
    std::string color;
  };
  int width_, height_;
  std::string title_;
  std::vector<Line> lines_;
};

}  // namespace tw
