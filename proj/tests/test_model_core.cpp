#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>

#include "crfwi/errors.hpp"
#include "crfwi/model_core.hpp"
#include "test_util.hpp"

using namespace crfwi;
using crfwi::testing::random_grid;
using crfwi::testing::temp_dir;

TEST(Ricker, UnitPeakAtDelay) {
  // t0 = 1/f = 0.125 s is not a multiple of 1.9 ms, so place it on the grid.
  const double dt = 1.9e-3;
  const double t0 = 66 * dt;
  const auto w = ricker(8.0, dt, 1000, t0);
  EXPECT_EQ(w.nt(), 1000u);
  EXPECT_DOUBLE_EQ(w.samples[66], 1.0);

  const auto d = ricker(8.0, 1e-3, 1000);  // t0 = 0.125 s = sample 125
  EXPECT_DOUBLE_EQ(d.samples[125], 1.0);
}

TEST(Ricker, EvenAboutDelay) {
  const auto w = ricker(8.0, 1e-3, 400);
  for (std::size_t k = 1; k <= 125; ++k) EXPECT_NEAR(w.samples[125 - k], w.samples[125 + k], 1e-14);
}

TEST(Ricker, SpectrumPeaksAtCentralFrequency) {
  const double dt = 1e-3;
  const std::size_t n = 1000;
  const auto w = ricker(10.0, dt, n);
  std::size_t best = 0;
  double best_mag = 0.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += w.samples[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(n));
    if (std::abs(acc) > best_mag) best_mag = std::abs(acc), best = k;
  }
  const double df = 1.0 / (double(n) * dt);
  EXPECT_LE(std::abs(double(best) * df - 10.0), df);
}

TEST(Ricker, ZeroMean) {
  const auto w = ricker(8.0, 1e-3, 1000);
  double s = 0.0, a = 0.0;
  for (double x : w.samples) s += x, a += std::abs(x);
  EXPECT_LT(std::abs(s), 1e-4 * a);
}

TEST(Ricker, RejectsBadArguments) {
  EXPECT_THROW(ricker(0.0, 1e-3, 10), std::invalid_argument);
  EXPECT_THROW(ricker(8.0, -1e-3, 10), std::invalid_argument);
  EXPECT_THROW(ricker(8.0, 1e-3, 0), std::invalid_argument);
}

TEST(VelocityGrid, ValidateRejectsBadValues) {
  EXPECT_THROW(VelocityGrid::make(2, 2, 10, 10, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(VelocityGrid::make(1, 2, 10, 10, {1, -2}), std::invalid_argument);
  EXPECT_THROW(VelocityGrid::make(1, 2, 10, 10, {1, NAN}), std::invalid_argument);
  EXPECT_THROW(VelocityGrid::make(1, 2, 0, 10, {1, 2}), std::invalid_argument);
}

TEST(GridFile, RoundTripIsBitExact) {
  const auto dir = temp_dir("vgrd");
  auto g = random_grid(7, 5, 12.5, 3);
  for (auto& v : g.values) v = double(float(v));
  const auto path = (dir / "g.vgrd").string();
  save_velocity_grid(g, path);
  const auto back = load_velocity_grid(path);
  EXPECT_EQ(back.nz, g.nz);
  EXPECT_EQ(back.nx, g.nx);
  EXPECT_EQ(back.dz, g.dz);
  EXPECT_EQ(back.dx, g.dx);
  EXPECT_EQ(back.values, g.values);
  // A second cycle is the identity even for values that were rounded to f32.
  const auto raw = random_grid(3, 4, 7.3, 9);
  const auto once = decode_velocity_grid(encode_velocity_grid(raw));
  EXPECT_EQ(decode_velocity_grid(encode_velocity_grid(once)).values, once.values);
}

TEST(GridFile, BadMagicAndSizeMismatch) {
  auto bytes = encode_velocity_grid(random_grid(2, 3, 10, 1));
  auto bad = bytes;
  bad[0] = 'X', bad[1] = 'X', bad[2] = 'X', bad[3] = 'X';
  EXPECT_THROW(decode_velocity_grid(bad), FormatError);
  auto short_payload = bytes;
  short_payload.pop_back();
  EXPECT_THROW(decode_velocity_grid(short_payload), FormatError);
  auto nonfinite = bytes;
  const float inf = INFINITY;
  std::memcpy(nonfinite.data() + 20, &inf, 4);
  EXPECT_THROW(decode_velocity_grid(nonfinite), FormatError);
  EXPECT_THROW(load_velocity_grid("/nonexistent/crfwi/file.vgrd"), std::runtime_error);
}

TEST(GatherFile, RoundTrip) {
  ShotGather g = ShotGather::zeros(3, 11, 2e-3);
  const auto v = crfwi::testing::random_vector(g.data.size(), 5);
  for (std::size_t i = 0; i < v.size(); ++i) g.data[i] = double(float(v[i]));
  const auto back = decode_shot_gather(encode_shot_gather(g));
  EXPECT_EQ(back.n_receivers, 3u);
  EXPECT_EQ(back.nt, 11u);
  EXPECT_EQ(float(back.dt), float(2e-3));
  EXPECT_EQ(back.data, g.data);
  auto bytes = encode_shot_gather(g);
  bytes[3] = 'X';
  EXPECT_THROW(decode_shot_gather(bytes), FormatError);
}

TEST(Metrics, IdentityAndConstantOffset) {
  const auto g = random_grid(12, 14, 10, 2);
  const auto same = evaluate_metrics(g, g);
  EXPECT_EQ(same.mse, 0.0);
  EXPECT_EQ(same.mae, 0.0);
  EXPECT_NEAR(same.ssim, 1.0, 1e-12);

  const auto c = VelocityGrid::constant(8, 9, 10, 10, 2000.0);
  const auto c1 = VelocityGrid::constant(8, 9, 10, 10, 2100.0);
  const auto m = evaluate_metrics(c1, c);
  EXPECT_NEAR(m.mse, 0.01, 1e-12);
  EXPECT_NEAR(m.mae, 0.1, 1e-12);
  EXPECT_TRUE(std::isnan(m.nmse));
}

TEST(Metrics, Symmetry) {
  const auto a = random_grid(10, 11, 10, 4), b = random_grid(10, 11, 10, 5);
  const auto ab = evaluate_metrics(a, b), ba = evaluate_metrics(b, a);
  EXPECT_DOUBLE_EQ(ab.mse, ba.mse);
  EXPECT_DOUBLE_EQ(ab.mae, ba.mae);
  EXPECT_GE(ab.ssim, -1.0);
  EXPECT_LE(ab.ssim, 1.0);
}

TEST(Metrics, ShapeMismatch) {
  EXPECT_THROW(evaluate_metrics(random_grid(3, 4, 1, 1), random_grid(4, 3, 1, 1)),
               std::invalid_argument);
}

namespace {

// Direct per-window SSIM: explicit 7x7 Gaussian weights, no separable filtering.
double ssim_reference(const std::vector<double>& a, const std::vector<double>& b, std::size_t nz,
                      std::size_t nx, double range) {
  std::vector<double> g(7);
  double s = 0.0;
  for (int i = 0; i < 7; ++i) s += g[i] = std::exp(-0.5 * (i - 3) * (i - 3) / 2.25);
  for (auto& x : g) x /= s;
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double total = 0.0;
  int count = 0;
  for (std::size_t z0 = 0; z0 + 7 <= nz; ++z0)
    for (std::size_t x0 = 0; x0 + 7 <= nx; ++x0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
          const double w = g[i] * g[j];
          const double va = a[(z0 + i) * nx + x0 + j], vb = b[(z0 + i) * nx + x0 + j];
          ma += w * va, mb += w * vb;
          saa += w * va * va, sbb += w * vb * vb, sab += w * va * vb;
        }
      const double vara = saa - ma * ma, varb = sbb - mb * mb, cov = sab - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (vara + varb + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST(Metrics, SsimMatchesDirectFormula) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = random_grid(13, 17, 10, 10 + seed), b = random_grid(13, 17, 10, 20 + seed);
    std::vector<double> pa(a.size()), pb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = a.values[i] / 1000, pb[i] = b.values[i] / 1000;
    const auto [lo, hi] = std::minmax_element(pb.begin(), pb.end());
    const double ref = ssim_reference(pa, pb, 13, 17, *hi - *lo);
    EXPECT_NEAR(evaluate_metrics(a, b).ssim, ref, 1e-6);
  }
}

TEST(Metrics, CsvRows) {
  std::ostringstream os;
  write_metrics_csv(Metrics{0.5, 0.25, 0.9, 0.1}, os);
  EXPECT_NE(os.str().find("metric,value"), std::string::npos);
  EXPECT_NE(os.str().find("mse,0.5"), std::string::npos);
}
