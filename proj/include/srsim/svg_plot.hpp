#pragma once

#include <string>
#include <vector>

namespace srsim {

struct PlotSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::string label;
  std::string color = "#1f77b4";
  bool points_only = false;  // scatter markers instead of a line
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  std::vector<double> x_markers;  // dashed vertical guides
};

/// Writes a self-contained SVG line/scatter plot. A CSV of the plotted
/// points with the same stem is written next to it so downstream checks can
/// parse numbers instead of pixels.
void write_svg_plot(const std::string& path, const PlotSpec& spec,
                    const std::vector<PlotSeries>& series);

}  // namespace srsim
