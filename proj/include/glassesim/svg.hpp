#pragma once

#include <string>
#include <vector>

namespace glassesim {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  int width = 640;
  int height = 420;
};

/// Axes, ticks, one polyline per series and a legend. Non-finite points break the line.
std::string render_svg(const LinePlot& plot);

void write_svg(const std::string& path, const LinePlot& plot);

}  // namespace glassesim
