#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace crfwi {

/// Velocity model on a regular grid, row-major (iz * nx + ix), values in m/s.
/// A 1D model is a depth profile with nx == 1.
struct VelocityGrid {
  std::size_t nz = 0;
  std::size_t nx = 0;
  double dz = 0.0;
  double dx = 0.0;
  std::vector<double> values;

  static VelocityGrid make(std::size_t nz, std::size_t nx, double dz, double dx,
                           std::vector<double> values);
  static VelocityGrid constant(std::size_t nz, std::size_t nx, double dz, double dx,
                               double velocity);

  std::size_t size() const noexcept { return values.size(); }
  int dims() const noexcept { return nx == 1 ? 1 : 2; }
  std::size_t index(std::size_t iz, std::size_t ix) const noexcept { return iz * nx + ix; }
  double at(std::size_t iz, std::size_t ix) const { return values[index(iz, ix)]; }
  double& at(std::size_t iz, std::size_t ix) { return values[index(iz, ix)]; }
  bool same_shape(const VelocityGrid& other) const noexcept {
    return nz == other.nz && nx == other.nx;
  }
  double min_value() const;
  double max_value() const;

  // Throws std::invalid_argument if any invariant is broken.
  void validate() const;
};

struct CellIndex {
  std::size_t iz = 0;
  std::size_t ix = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

enum class Boundary { FreeSurfaceTop, PmlAllSides };

struct AcquisitionGeometry {
  std::vector<CellIndex> sources;
  std::vector<CellIndex> receivers;
  Boundary boundary = Boundary::PmlAllSides;

  void validate(const VelocityGrid& grid) const;
};

struct Wavelet {
  double dt = 0.0;
  std::vector<double> samples;

  std::size_t nt() const noexcept { return samples.size(); }
  void validate() const;
};

/// Receiver-major trace matrix for one shot: data[r * nt + t].
struct ShotGather {
  std::size_t n_receivers = 0;
  std::size_t nt = 0;
  double dt = 0.0;
  std::vector<double> data;

  static ShotGather zeros(std::size_t n_receivers, std::size_t nt, double dt);
  double at(std::size_t r, std::size_t t) const { return data[r * nt + t]; }
  double& at(std::size_t r, std::size_t t) { return data[r * nt + t]; }
  std::span<const double> trace(std::size_t r) const {
    return {data.data() + r * nt, nt};
  }
  std::span<double> trace(std::size_t r) { return {data.data() + r * nt, nt}; }
  bool same_shape(const ShotGather& other) const noexcept {
    return n_receivers == other.n_receivers && nt == other.nt;
  }
};

struct Metrics {
  double mse = 0.0;   // (km/s)^2
  double mae = 0.0;   // km/s
  double ssim = 1.0;
  double nmse = 0.0;  // mse / var(truth); NaN for a constant truth
};

/// Ricker wavelet (1 - 2 pi^2 f^2 (t-t0)^2) exp(-pi^2 f^2 (t-t0)^2), t = k*dt.
/// t0 defaults to 1/peak_freq when NaN.
Wavelet ricker(double peak_freq_hz, double dt, std::size_t nt,
               double t0 = std::numeric_limits<double>::quiet_NaN());

// Binary I/O. Values are stored as little-endian f32, so a save/load cycle is
// exact for grids whose values are f32-representable and idempotent otherwise.
void save_velocity_grid(const VelocityGrid& grid, const std::string& path);
VelocityGrid load_velocity_grid(const std::string& path);
std::vector<std::uint8_t> encode_velocity_grid(const VelocityGrid& grid);
VelocityGrid decode_velocity_grid(std::span<const std::uint8_t> bytes);

void save_shot_gather(const ShotGather& gather, const std::string& path);
ShotGather load_shot_gather(const std::string& path);
std::vector<std::uint8_t> encode_shot_gather(const ShotGather& gather);
ShotGather decode_shot_gather(std::span<const std::uint8_t> bytes);

Metrics evaluate_metrics(const VelocityGrid& predicted, const VelocityGrid& truth);

/// SSIM with a 7x7 Gaussian window (sigma 1.5), averaged over windows that fit
/// entirely inside the grid. Axes shorter than 7 cells use a window of one cell.
double ssim(std::span<const double> a, std::span<const double> b, std::size_t nz,
            std::size_t nx, double dynamic_range);

void write_metrics_csv(const Metrics& metrics, std::ostream& os);

// Writes `bytes` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace crfwi
