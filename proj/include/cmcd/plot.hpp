#pragma once

// Self-contained SVG line plots. Output is a pure function of the input, with
// fixed-precision coordinates, so reruns are byte-identical.

#include <string>
#include <vector>

namespace cmcd {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

std::string render_svg(const PlotSpec& plot);
/// The plotted points as CSV: series,x,y.
std::string series_csv(const PlotSpec& plot);

}  // namespace cmcd
