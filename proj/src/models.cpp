#include "crfwi/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace crfwi {

VelocityGrid layered_1d(std::size_t nz, double dz, double v_top, double v_bottom,
                        std::size_t interface_cell) {
  std::vector<double> v(nz);
  for (std::size_t i = 0; i < nz; ++i) v[i] = i < interface_cell ? v_top : v_bottom;
  return VelocityGrid::make(nz, 1, dz, dz, std::move(v));
}

VelocityGrid two_layer_2d(std::size_t nz, std::size_t nx, double h, double v_top,
                          double v_bottom, std::size_t interface_cell) {
  std::vector<double> v(nz * nx);
  for (std::size_t iz = 0; iz < nz; ++iz)
    for (std::size_t ix = 0; ix < nx; ++ix) v[iz * nx + ix] = iz < interface_cell ? v_top : v_bottom;
  return VelocityGrid::make(nz, nx, h, h, std::move(v));
}

namespace {

// Deterministic value in [-1, 1] for an integer key.
double jitter(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdull;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ull;
  k ^= k >> 33;
  return double(k % 20001) / 10000.0 - 1.0;
}

}  // namespace

VelocityGrid marmousi_like(std::size_t nz, std::size_t nx, double h) {
  if (nz < 2 || nx < 1 || !(h > 0.0)) throw std::invalid_argument("invalid model size");
  const double depth = double(nz) * h;
  const double width = double(nx) * h;
  const double water = 0.045 * depth;

  // Layer tops in undeformed depth; thicknesses 4-9 % of the section.
  std::vector<double> tops{water};
  while (tops.back() < 2.0 * depth) {
    const double t = (0.065 + 0.025 * jitter(tops.size())) * depth;
    tops.push_back(tops.back() + t);
  }

  struct Fault {
    double x0, dip_cot, throw_m;
  };
  const Fault faults[] = {{0.28 * width, 0.45, 0.07 * depth},
                          {0.47 * width, 0.40, 0.09 * depth},
                          {0.66 * width, 0.50, 0.06 * depth}};

  std::vector<double> v(nz * nx);
  for (std::size_t iz = 0; iz < nz; ++iz) {
    const double z = (double(iz) + 0.5) * h;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double x = (double(ix) + 0.5) * h;
      double vel;
      if (z < water) {
        vel = 1500.0;
      } else {
        double shift = 0.0;
        for (const auto& f : faults)
          if (x > f.x0 + (z - water) * f.dip_cot) shift += f.throw_m;
        const double burial = (z - water) / (depth - water);
        const double fold = burial * (0.08 * depth * std::sin(2.0 * std::numbers::pi * x / (0.9 * width)) +
                                      0.03 * depth * std::sin(2.0 * std::numbers::pi * x / (0.23 * width) + 1.3));
        const double zd = z + shift - fold;
        std::size_t layer = 0;
        while (layer + 1 < tops.size() && zd >= tops[layer + 1]) ++layer;
        const double rel = std::clamp((zd - water) / depth, 0.0, 1.5);
        vel = 1650.0 + 2600.0 * std::pow(rel, 0.85) + 260.0 * jitter(1000 + layer);
        // Fast carbonate band and a slow lens.
        if (rel > 0.60 && rel < 0.68) vel = 4300.0 + 150.0 * jitter(2000 + layer);
        const double ex = (x - 0.58 * width) / (0.09 * width);
        const double ez = (z - 0.42 * depth) / (0.05 * depth);
        if (ex * ex + ez * ez < 1.0) vel = 1900.0;
      }
      v[iz * nx + ix] = std::clamp(vel, 1500.0, 4700.0);
    }
  }
  return VelocityGrid::make(nz, nx, h, h, std::move(v));
}

VelocityGrid salt_like(std::size_t nz, std::size_t nx, double h) {
  if (nz < 2 || nx < 1 || !(h > 0.0)) throw std::invalid_argument("invalid model size");
  const double depth = double(nz) * h, width = double(nx) * h;
  std::vector<double> v(nz * nx);
  for (std::size_t iz = 0; iz < nz; ++iz) {
    const double z = (double(iz) + 0.5) * h;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double x = (double(ix) + 0.5) * h;
      const double u = (x - 0.5 * width) / (0.22 * width);
      const double top = depth * (0.62 - 0.34 * std::exp(-u * u));
      const double base = depth * 0.88;
      const double rel = z / depth;
      const auto layer = static_cast<std::uint64_t>(std::floor(rel * 9.0));
      double vel = 1600.0 + 2000.0 * rel + 120.0 * jitter(3000 + layer);
      if (z > top && z < base && std::abs(u) < 1.6) vel = 4500.0;
      v[iz * nx + ix] = vel;
    }
  }
  return VelocityGrid::make(nz, nx, h, h, std::move(v));
}

VelocityGrid marmousi_trace(std::size_t column) {
  const auto full = marmousi_like();
  if (column >= full.nx) throw std::invalid_argument("trace column outside the model");
  std::vector<double> v(full.nz);
  for (std::size_t iz = 0; iz < full.nz; ++iz) v[iz] = full.at(iz, column);
  return VelocityGrid::make(full.nz, 1, full.dz, full.dz, std::move(v));
}

VelocityGrid marmousi_crop() {
  const auto full = marmousi_like();
  constexpr std::size_t nz = 47, nx = 72, x0 = 36;
  std::vector<double> v(nz * nx);
  for (std::size_t iz = 0; iz < nz; ++iz)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t fz = 2 * iz, fx = 2 * (ix + x0);
      v[iz * nx + ix] = 0.25 * (full.at(fz, fx) + full.at(fz + 1, fx) + full.at(fz, fx + 1) +
                                full.at(fz + 1, fx + 1));
    }
  return VelocityGrid::make(nz, nx, 2.0 * full.dz, 2.0 * full.dx, std::move(v));
}

VelocityGrid gaussian_smooth(const VelocityGrid& grid, double sigma_cells) {
  grid.validate();
  if (!(sigma_cells > 0.0)) return grid;
  const auto r = static_cast<long>(std::ceil(3.0 * sigma_cells));
  std::vector<double> w(2 * r + 1);
  double sum = 0.0;
  for (long k = -r; k <= r; ++k) sum += w[k + r] = std::exp(-0.5 * double(k * k) / (sigma_cells * sigma_cells));
  for (auto& x : w) x /= sum;
  const long nz = static_cast<long>(grid.nz), nx = static_cast<long>(grid.nx);
  auto pass = [&](const std::vector<double>& in, bool along_z) {
    std::vector<double> out(in.size(), 0.0);
    for (long iz = 0; iz < nz; ++iz)
      for (long ix = 0; ix < nx; ++ix) {
        double acc = 0.0;
        for (long k = -r; k <= r; ++k) {
          const long jz = along_z ? std::clamp(iz + k, 0L, nz - 1) : iz;
          const long jx = along_z ? ix : std::clamp(ix + k, 0L, nx - 1);
          acc += w[k + r] * in[jz * nx + jx];
        }
        out[iz * nx + ix] = acc;
      }
    return out;
  };
  auto v = pass(grid.values, true);
  if (grid.nx > 1) v = pass(v, false);
  return VelocityGrid::make(grid.nz, grid.nx, grid.dz, grid.dx, std::move(v));
}

VelocityGrid linear_gradient(const VelocityGrid& shape, double v_top, double v_bottom) {
  std::vector<double> v(shape.size());
  for (std::size_t iz = 0; iz < shape.nz; ++iz) {
    const double t = shape.nz > 1 ? double(iz) / double(shape.nz - 1) : 0.0;
    for (std::size_t ix = 0; ix < shape.nx; ++ix) v[iz * shape.nx + ix] = v_top + t * (v_bottom - v_top);
  }
  return VelocityGrid::make(shape.nz, shape.nx, shape.dz, shape.dx, std::move(v));
}

Padding halo_padding(const VelocityGrid& grid, std::size_t width, Boundary boundary) {
  Padding p;
  p.top = boundary == Boundary::FreeSurfaceTop ? 0 : width;
  p.bottom = width;
  if (grid.nx > 1) p.left = p.right = width;
  return p;
}

VelocityGrid pad_model(const VelocityGrid& grid, const Padding& pad) {
  grid.validate();
  const std::size_t nz = grid.nz + pad.top + pad.bottom;
  const std::size_t nx = grid.nx + pad.left + pad.right;
  std::vector<double> v(nz * nx);
  for (std::size_t iz = 0; iz < nz; ++iz) {
    const std::size_t sz = std::clamp<long>(long(iz) - long(pad.top), 0, long(grid.nz) - 1);
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t sx = std::clamp<long>(long(ix) - long(pad.left), 0, long(grid.nx) - 1);
      v[iz * nx + ix] = grid.at(sz, sx);
    }
  }
  return VelocityGrid::make(nz, nx, grid.dz, grid.dx, std::move(v));
}

VelocityGrid crop_model(const VelocityGrid& padded, const Padding& pad) {
  if (padded.nz <= pad.top + pad.bottom || padded.nx <= pad.left + pad.right)
    throw std::invalid_argument("padding larger than the model");
  const std::size_t nz = padded.nz - pad.top - pad.bottom;
  const std::size_t nx = padded.nx - pad.left - pad.right;
  std::vector<double> v(nz * nx);
  for (std::size_t iz = 0; iz < nz; ++iz)
    for (std::size_t ix = 0; ix < nx; ++ix) v[iz * nx + ix] = padded.at(iz + pad.top, ix + pad.left);
  return VelocityGrid::make(nz, nx, padded.dz, padded.dx, std::move(v));
}

AcquisitionGeometry surface_geometry(std::size_t first, std::size_t last, std::size_t row,
                                     std::size_t n_shots, std::size_t shot_spacing,
                                     std::size_t receiver_spacing, Boundary boundary) {
  if (last < first || n_shots == 0 || receiver_spacing == 0)
    throw std::invalid_argument("invalid acquisition layout");
  const std::size_t span = (n_shots - 1) * shot_spacing;
  if (span > last - first) throw std::invalid_argument("shots do not fit in the window");
  const std::size_t start = first + (last - first - span) / 2;
  AcquisitionGeometry geo;
  geo.boundary = boundary;
  for (std::size_t s = 0; s < n_shots; ++s) geo.sources.push_back({row, start + s * shot_spacing});
  for (std::size_t x = first; x <= last; x += receiver_spacing) geo.receivers.push_back({row, x});
  return geo;
}

}  // namespace crfwi
