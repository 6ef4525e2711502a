#include "crfwi/model_core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "crfwi/errors.hpp"

namespace crfwi {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void expect_magic(const char (&magic)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
      throw FormatError(std::string("bad magic, expected ") + magic);
    }
    pos_ += 4;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated file");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Normalized 1D Gaussian taps; a single unit tap when the axis is too short.
std::vector<double> gaussian_taps(std::size_t extent) {
  if (extent < 7) return {1.0};
  std::vector<double> w(7);
  double sum = 0.0;
  for (int i = 0; i < 7; ++i) {
    const double d = i - 3;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Valid-mode separable correlation of an nz x nx field.
std::vector<double> filter_valid(std::span<const double> f, std::size_t nz, std::size_t nx,
                                 const std::vector<double>& wz,
                                 const std::vector<double>& wx) {
  const std::size_t oz = nz - wz.size() + 1;
  const std::size_t ox = nx - wx.size() + 1;
  std::vector<double> rows(nz * ox, 0.0);
  for (std::size_t i = 0; i < nz; ++i)
    for (std::size_t j = 0; j < ox; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < wx.size(); ++k) s += wx[k] * f[i * nx + j + k];
      rows[i * ox + j] = s;
    }
  std::vector<double> out(oz * ox, 0.0);
  for (std::size_t i = 0; i < oz; ++i)
    for (std::size_t j = 0; j < ox; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < wz.size(); ++k) s += wz[k] * rows[(i + k) * ox + j];
      out[i * ox + j] = s;
    }
  return out;
}

}  // namespace

VelocityGrid VelocityGrid::make(std::size_t nz, std::size_t nx, double dz, double dx,
                                std::vector<double> values) {
  VelocityGrid g{nz, nx, dz, dx, std::move(values)};
  g.validate();
  return g;
}

VelocityGrid VelocityGrid::constant(std::size_t nz, std::size_t nx, double dz, double dx,
                                    double velocity) {
  return make(nz, nx, dz, dx, std::vector<double>(nz * nx, velocity));
}

double VelocityGrid::min_value() const {
  return *std::min_element(values.begin(), values.end());
}

double VelocityGrid::max_value() const {
  return *std::max_element(values.begin(), values.end());
}

void VelocityGrid::validate() const {
  if (nz < 1 || nx < 1) throw std::invalid_argument("grid dimensions must be >= 1");
  if (!(dz > 0.0) || !(dx > 0.0) || !std::isfinite(dz) || !std::isfinite(dx))
    throw std::invalid_argument("grid spacing must be positive and finite");
  if (values.size() != nz * nx)
    throw std::invalid_argument("grid value count does not match nz*nx");
  for (double v : values)
    if (!std::isfinite(v) || v <= 0.0)
      throw std::invalid_argument("grid velocities must be finite and positive");
}

void AcquisitionGeometry::validate(const VelocityGrid& grid) const {
  if (sources.empty()) throw std::invalid_argument("geometry needs at least one source");
  if (receivers.empty()) throw std::invalid_argument("geometry needs at least one receiver");
  auto inside = [&](const CellIndex& c) { return c.iz < grid.nz && c.ix < grid.nx; };
  for (const auto& s : sources)
    if (!inside(s)) throw std::invalid_argument("source position outside grid");
  for (const auto& r : receivers)
    if (!inside(r)) throw std::invalid_argument("receiver position outside grid");
}

void Wavelet::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("wavelet dt must be positive");
  if (samples.empty()) throw std::invalid_argument("wavelet needs at least one sample");
  for (double s : samples)
    if (!std::isfinite(s)) throw std::invalid_argument("wavelet samples must be finite");
}

ShotGather ShotGather::zeros(std::size_t n_receivers, std::size_t nt, double dt) {
  return ShotGather{n_receivers, nt, dt, std::vector<double>(n_receivers * nt, 0.0)};
}

Wavelet ricker(double peak_freq_hz, double dt, std::size_t nt, double t0) {
  if (!(peak_freq_hz > 0.0)) throw std::invalid_argument("ricker: peak frequency must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("ricker: dt must be > 0");
  if (nt < 1) throw std::invalid_argument("ricker: nt must be >= 1");
  if (std::isnan(t0)) t0 = 1.0 / peak_freq_hz;
  Wavelet w{dt, std::vector<double>(nt)};
  const double pf = std::numbers::pi * peak_freq_hz;
  for (std::size_t k = 0; k < nt; ++k) {
    const double tau = static_cast<double>(k) * dt - t0;
    const double arg = pf * pf * tau * tau;
    w.samples[k] = (1.0 - 2.0 * arg) * std::exp(-arg);
  }
  return w;
}

std::vector<std::uint8_t> encode_velocity_grid(const VelocityGrid& grid) {
  grid.validate();
  std::vector<std::uint8_t> out{'V', 'G', 'R', 'D'};
  out.reserve(20 + 4 * grid.size());
  put_u32(out, static_cast<std::uint32_t>(grid.nz));
  put_u32(out, static_cast<std::uint32_t>(grid.nx));
  put_f32(out, grid.dz);
  put_f32(out, grid.dx);
  for (double v : grid.values) put_f32(out, v);
  return out;
}

VelocityGrid decode_velocity_grid(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("VGRD");
  VelocityGrid g;
  g.nz = r.u32();
  g.nx = r.u32();
  g.dz = r.f32();
  g.dx = r.f32();
  const std::size_t n = g.nz * g.nx;
  if (r.remaining() != 4 * n) throw FormatError("VGRD payload size does not match header");
  g.values.resize(n);
  for (auto& v : g.values) {
    v = r.f32();
    if (!std::isfinite(v)) throw FormatError("VGRD contains non-finite value");
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("VGRD invalid: ") + e.what());
  }
  return g;
}

void save_velocity_grid(const VelocityGrid& grid, const std::string& path) {
  write_file_atomic(path, encode_velocity_grid(grid));
}

VelocityGrid load_velocity_grid(const std::string& path) {
  return decode_velocity_grid(read_all(path));
}

std::vector<std::uint8_t> encode_shot_gather(const ShotGather& gather) {
  if (gather.data.size() != gather.n_receivers * gather.nt)
    throw std::invalid_argument("gather payload does not match shape");
  std::vector<std::uint8_t> out{'S', 'G', 'T', 'H'};
  out.reserve(16 + 4 * gather.data.size());
  put_u32(out, static_cast<std::uint32_t>(gather.n_receivers));
  put_u32(out, static_cast<std::uint32_t>(gather.nt));
  put_f32(out, gather.dt);
  for (double v : gather.data) put_f32(out, v);
  return out;
}

ShotGather decode_shot_gather(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("SGTH");
  ShotGather g;
  g.n_receivers = r.u32();
  g.nt = r.u32();
  g.dt = r.f32();
  const std::size_t n = g.n_receivers * g.nt;
  if (r.remaining() != 4 * n) throw FormatError("SGTH payload size does not match header");
  if (!(g.dt > 0.0)) throw FormatError("SGTH dt must be positive");
  g.data.resize(n);
  for (auto& v : g.data) {
    v = r.f32();
    if (!std::isfinite(v)) throw FormatError("SGTH contains non-finite value");
  }
  return g;
}

void save_shot_gather(const ShotGather& gather, const std::string& path) {
  write_file_atomic(path, encode_shot_gather(gather));
}

ShotGather load_shot_gather(const std::string& path) {
  return decode_shot_gather(read_all(path));
}

double ssim(std::span<const double> a, std::span<const double> b, std::size_t nz,
            std::size_t nx, double dynamic_range) {
  const auto wz = gaussian_taps(nz);
  const auto wx = gaussian_taps(nx);
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);

  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, nz, nx, wz, wx);
  const auto mu_b = filter_valid(b, nz, nx, wz, wx);
  const auto e_aa = filter_valid(aa, nz, nx, wz, wx);
  const auto e_bb = filter_valid(bb, nz, nx, wz, wx);
  const auto e_ab = filter_valid(ab, nz, nx, wz, wx);

  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

Metrics evaluate_metrics(const VelocityGrid& predicted, const VelocityGrid& truth) {
  if (!predicted.same_shape(truth))
    throw std::invalid_argument("evaluate_metrics: grid shapes differ");
  const std::size_t n = truth.size();
  std::vector<double> p(n), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = predicted.values[i] / 1000.0;
    t[i] = truth.values[i] / 1000.0;
  }
  Metrics m;
  double mean_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - t[i];
    m.mse += d * d;
    m.mae += std::abs(d);
    mean_t += t[i];
  }
  m.mse /= static_cast<double>(n);
  m.mae /= static_cast<double>(n);
  mean_t /= static_cast<double>(n);
  double var_t = 0.0;
  for (double v : t) var_t += (v - mean_t) * (v - mean_t);
  var_t /= static_cast<double>(n);
  m.nmse = var_t > 0.0 ? m.mse / var_t : std::numeric_limits<double>::quiet_NaN();

  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  double range = *hi - *lo;
  if (range <= 0.0) range = 1.0;
  m.ssim = std::clamp(ssim(p, t, truth.nz, truth.nx, range), -1.0, 1.0);
  return m;
}

void write_metrics_csv(const Metrics& metrics, std::ostream& os) {
  os.precision(10);
  os << "metric,value\n"
     << "mse," << metrics.mse << "\n"
     << "mae," << metrics.mae << "\n"
     << "ssim," << metrics.ssim << "\n"
     << "nmse," << metrics.nmse << "\n";
}

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

}  // namespace crfwi
