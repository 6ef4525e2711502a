#include "plots.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace crfwi::plots {

namespace {

constexpr double kW = 640, kH = 420, kL = 70, kR = 20, kT = 40, kB = 50;

const std::array<const char*, 6> kColors{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); }
  double py(double y) const { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); }
};

std::string header(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title
     << "</text>\n";
  return os.str();
}

std::string axes(const Frame& f, const std::string& xl, const std::string& yl) {
  std::ostringstream os;
  os << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << kW - kL - kR << "\" height=\""
     << kH - kT - kB << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kL << "\" y=\"" << kH - kB + 16 << "\">" << xl << "</text>\n";
  os << "<text x=\"" << kW - kR << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"end\">"
     << fmt(f.x1) << "</text>\n";
  os << "<text x=\"" << kL - 6 << "\" y=\"" << kT + 10 << "\" text-anchor=\"end\">" << fmt(f.y1)
     << "</text>\n";
  os << "<text x=\"" << kL - 6 << "\" y=\"" << kH - kB << "\" text-anchor=\"end\">" << fmt(f.y0)
     << "</text>\n";
  os << "<text x=\"14\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 14 " << kH / 2
     << ")\" text-anchor=\"middle\">" << yl << "</text>\n";
  return os.str();
}

std::string lines(const std::vector<Series>& series, const Frame& f, bool logx, bool logy) {
  std::ostringstream os;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % kColors.size()];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].y.size(); ++i) {
      double x = double(i + 1), y = series[s].y[i];
      if (logy && !(y > 0)) continue;
      if (logx) x = std::log10(x);
      if (logy) y = std::log10(y);
      os << fmt(f.px(x)) << ',' << fmt(f.py(y)) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << kW - kR - 8 << "\" y=\"" << kT + 16 + 16 * double(s)
       << "\" text-anchor=\"end\" fill=\"" << color << "\">" << series[s].name << "</text>\n";
  }
  return os.str();
}

Frame fit(const std::vector<Series>& series, bool logx, bool logy) {
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  std::size_t n = 1;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double y : s.y) {
      if (logy && !(y > 0)) continue;
      const double v = logy ? std::log10(y) : y;
      ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    }
  }
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  if (ymax == ymin) ymax = ymin + 1;
  return {logx ? 0.0 : 1.0, logx ? std::log10(double(std::max<std::size_t>(n, 2))) : double(std::max<std::size_t>(n, 2)),
          ymin, ymax};
}

// Viridis-like ramp sampled at five stops.
std::array<int, 3> colormap(double t) {
  static const double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, int(t));
  const double w = t - i;
  std::array<int, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = int(std::lround(stops[i][k] * (1 - w) + stops[i + 1][k] * w));
  return c;
}

}  // namespace

std::string loglog_svg(const std::vector<Series>& series, const std::string& title) {
  const Frame f = fit(series, true, true);
  return header(title) + axes(f, "log10 index", "log10 eigenvalue") + lines(series, f, true, true) +
         "</svg>\n";
}

std::string curve_svg(const std::vector<Series>& series, const std::string& title, bool log_y) {
  const Frame f = fit(series, false, log_y);
  return header(title) + axes(f, "epoch", log_y ? "log10 value" : "value") +
         lines(series, f, false, log_y) + "</svg>\n";
}

std::string raster_svg(const VelocityGrid& grid, double vmin, double vmax, const std::string& title) {
  const double cell = std::max(1.0, std::min((kW - 40) / double(grid.nx), (kH - 60) / double(grid.nz)));
  std::ostringstream os;
  os << header(title);
  for (std::size_t iz = 0; iz < grid.nz; ++iz)
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      const auto c = colormap((grid.at(iz, ix) - vmin) / (vmax - vmin));
      os << "<rect x=\"" << fmt(20 + cell * double(ix)) << "\" y=\"" << fmt(40 + cell * double(iz))
         << "\" width=\"" << fmt(cell) << "\" height=\"" << fmt(cell) << "\" fill=\"rgb(" << c[0]
         << ',' << c[1] << ',' << c[2] << ")\"/>\n";
    }
  os << "</svg>\n";
  return os.str();
}

}  // namespace crfwi::plots
