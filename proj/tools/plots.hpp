#pragma once

#include <string>
#include <utility>
#include <vector>

#include "crfwi/model_core.hpp"

namespace crfwi::plots {

struct Series {
  std::string name;
  std::vector<double> y;  // plotted against 1-based index
};

// Standalone SVG documents.
std::string loglog_svg(const std::vector<Series>& series, const std::string& title);
std::string curve_svg(const std::vector<Series>& series, const std::string& title, bool log_y);
// Raster with a fixed colormap over [vmin, vmax] m/s.
std::string raster_svg(const VelocityGrid& grid, double vmin, double vmax, const std::string& title);

}  // namespace crfwi::plots
