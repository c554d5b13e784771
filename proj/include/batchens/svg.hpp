#pragma once

#include <string>
#include <vector>

namespace batchens {

struct SvgSeries {
  std::vector<double> x, y;
  std::string color = "#1f6fb2";
  bool dashed = false;
  std::string label;
};

struct SvgPlotSpec {
  std::string title, x_label, y_label;
  std::vector<SvgSeries> series;
  bool unit_diagonal = false;      // dashed y=x reference
  double hline = 0.0;              // horizontal reference line at this y
  bool draw_hline = false;
};

// Minimal line plot: axes, tick labels at the corners, one polyline per
// series, optional dashed y=x diagonal and horizontal reference line.
std::string render_svg_plot(const SvgPlotSpec& spec);
void write_svg_plot(const std::string& path, const SvgPlotSpec& spec);

}  // namespace batchens
