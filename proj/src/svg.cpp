#include "batchens/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "batchens/errors.hpp"

namespace batchens {

namespace {

constexpr double kWidth = 560, kHeight = 420;
constexpr double kLeft = 64, kRight = 20, kTop = 36, kBottom = 48;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace

std::string render_svg_plot(const SvgPlotSpec& spec) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : spec.series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (spec.unit_diagonal) {
    xmin = std::min(xmin, 0.0);
    xmax = std::max(xmax, 1.0);
    ymin = std::min(ymin, 0.0);
    ymax = std::max(ymax, 1.0);
  }
  if (spec.draw_hline) {
    ymin = std::min(ymin, spec.hline);
    ymax = std::max(ymax, spec.hline);
  }
  if (!(xmin < xmax)) xmax = xmin + 1.0;
  if (!(ymin < ymax)) ymax = ymin + 1.0;
  const double xpad = 0.02 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * (kWidth - kLeft - kRight); };
  auto py = [&](double y) {
    return kHeight - kBottom - (y - ymin) / (ymax - ymin) * (kHeight - kTop - kBottom);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << spec.title << "</text>\n";
  // axes
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 16
      << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(xmin + xpad) << "</text>\n";
  svg << "<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 16
      << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(xmax - xpad) << "</text>\n";
  svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << kHeight - kBottom
      << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(ymin + ypad) << "</text>\n";
  svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 4
      << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(ymax - ypad) << "</text>\n";
  svg << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\" font-size=\"12\">" << spec.x_label << "</text>\n";
  svg << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (kTop + kHeight - kBottom) / 2 << ")\">" << spec.y_label << "</text>\n";

  if (spec.unit_diagonal) {
    svg << "<line x1=\"" << px(0.0) << "\" y1=\"" << py(0.0) << "\" x2=\"" << px(1.0) << "\" y2=\""
        << py(1.0) << "\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n";
  }
  if (spec.draw_hline) {
    svg << "<line x1=\"" << px(xmin + xpad) << "\" y1=\"" << py(spec.hline) << "\" x2=\""
        << px(xmax - xpad) << "\" y2=\"" << py(spec.hline)
        << "\" stroke=\"#666\" stroke-dasharray=\"3 3\"/>\n";
  }

  double legend_y = kTop + 8;
  for (const auto& s : spec.series) {
    if (s.x.empty()) continue;
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\"";
    if (s.dashed) svg << " stroke-dasharray=\"5 3\"";
    svg << " stroke-width=\"1.6\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) svg << px(s.x[i]) << "," << py(s.y[i]) << " ";
    svg << "\"/>\n";
    if (!s.label.empty()) {
      svg << "<line x1=\"" << kWidth - kRight - 110 << "\" y1=\"" << legend_y << "\" x2=\""
          << kWidth - kRight - 90 << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color
          << "\" stroke-width=\"2\"/>";
      svg << "<text x=\"" << kWidth - kRight - 84 << "\" y=\"" << legend_y + 4
          << "\" font-size=\"11\">" << s.label << "</text>\n";
      legend_y += 16;
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_svg_plot(const std::string& path, const SvgPlotSpec& spec) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << render_svg_plot(spec);
}

}  // namespace batchens
