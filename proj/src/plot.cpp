#include "trep/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "trep/errors.hpp"

namespace trep {
namespace {

constexpr std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string svg_line_plot(std::span<const Series> series, const PlotOptions& o) {
  const double left = 56, right = 16, top = 28, bottom = 44;
  const double pw = o.width - left - right, ph = o.height - top - bottom;
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeMismatch("series x and y differ in length");
    for (double x : s.x) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (!std::isfinite(x_min)) x_min = 0.0, x_max = 1.0;
  if (x_max == x_min) x_max = x_min + 1.0;
  const double y_span = o.y_max > o.y_min ? o.y_max - o.y_min : 1.0;
  const auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  const auto py = [&](double y) { return top + (1.0 - (std::clamp(y, o.y_min, o.y_min + y_span) - o.y_min) / y_span) * ph; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(o.width) + "\" height=\"" +
                    std::to_string(o.height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(o.width / 2.0) + "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">" + escape(o.title) +
         "</text>\n";
  svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = o.y_min + y_span * i / 4.0, xv = x_min + (x_max - x_min) * i / 4.0;
    svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\">" + num(yv) +
           "</text>\n";
    svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\">" + num(xv) +
           "</text>\n";
  }
  svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(o.height - 8.0) + "\" text-anchor=\"middle\">" +
         escape(o.x_label) + "</text>\n";
  svg += "<text transform=\"translate(14," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(o.y_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % kColors.size()];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) points += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    svg += std::string("<polyline fill=\"none\" stroke=\"") + color + "\" stroke-width=\"2\"" +
           (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + " points=\"" + points + "\"/>\n";
    const double ly = top + 14.0 + 14.0 * static_cast<double>(k);
    svg += std::string("<line x1=\"") + num(left + pw - 120) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
           num(left + pw - 100) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"" +
           (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
    svg += "<text x=\"" + num(left + pw - 95) + "\" y=\"" + num(ly) + "\">" + escape(s.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_svg_line_plot(std::span<const Series> series, const PlotOptions& options,
                         const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  os << svg_line_plot(series, options);
  if (!os) throw Error("failed writing " + path.string());
}

}  // namespace trep
