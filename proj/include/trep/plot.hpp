#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace trep {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  double y_min = 0.0;
  double y_max = 1.0;
  int width = 480;
  int height = 320;
};

/// Line plot as a standalone SVG document.
std::string svg_line_plot(std::span<const Series> series, const PlotOptions& options);
void write_svg_line_plot(std::span<const Series> series, const PlotOptions& options,
                         const std::filesystem::path& path);

}  // namespace trep
