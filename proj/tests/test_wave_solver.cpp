#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "crfwi/errors.hpp"
#include "crfwi/wave_solver.hpp"
#include "test_util.hpp"

using namespace crfwi;

namespace {

SolverConfig config(double dt, std::size_t nt, std::size_t pml) {
  SolverConfig c;
  c.dt = dt;
  c.nt = nt;
  c.pml_width = pml;
  return c;
}

AcquisitionGeometry single(CellIndex s, CellIndex r, Boundary b) {
  AcquisitionGeometry g;
  g.sources = {s};
  g.receivers = {r};
  g.boundary = b;
  return g;
}

double rel_l2(std::span<const double> a, std::span<const double> b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) num += (a[i] - b[i]) * (a[i] - b[i]), den += b[i] * b[i];
  return std::sqrt(num / den);
}

}  // namespace

TEST(Stability, CflLimit2d) {
  auto g = VelocityGrid::constant(20, 20, 15, 15, 4500);
  const auto rep = stability_check(g, config(2.5e-3, 10, 0));
  const double limit = 15.0 / 4500.0 / std::sqrt(2.0);
  EXPECT_NEAR(rep.dt_limit, limit, 1e-15);
  EXPECT_FALSE(rep.ok);
  EXPECT_FALSE(rep.message.empty());
  EXPECT_TRUE(stability_check(g, config(1e-9, 10, 0)).ok);
}

TEST(Stability, CflLimit1d) {
  auto g = VelocityGrid::constant(20, 1, 10, 10, 1000);
  const auto rep = stability_check(g, config(0.01, 10, 0));
  EXPECT_DOUBLE_EQ(rep.dt_limit, 0.01);
  // At the limit the check still passes; just above fails.
  EXPECT_TRUE(rep.ok);
  EXPECT_FALSE(stability_check(g, config(0.0101, 10, 0)).ok);
}

TEST(Pml, NoLayerMeansNoDamping) {
  auto g = VelocityGrid::constant(12, 14, 10, 10, 2000);
  const auto p = pml_profiles(g, config(1e-3, 10, 0), Boundary::PmlAllSides);
  for (double a : p.a_z) EXPECT_EQ(a, 1.0);
  for (double b : p.b_z) EXPECT_EQ(b, 0.0);
  for (double a : p.a_x) EXPECT_EQ(a, 1.0);
  for (double b : p.b_x) EXPECT_EQ(b, 0.0);
}

TEST(Pml, GradedProfile) {
  auto g = VelocityGrid::constant(60, 50, 10, 10, 3000);
  auto cfg = config(1e-3, 10, 10);
  const auto p = pml_profiles(g, cfg, Boundary::FreeSurfaceTop);
  const double smax = 3.0 * 3000.0 * std::log(1000.0) / (2.0 * 10 * 10.0);
  // Outermost cells carry the full damping; interior none.
  EXPECT_NEAR(p.sigma_x.front(), smax, 1e-9 * smax);
  EXPECT_NEAR(p.sigma_x.back(), smax, 1e-9 * smax);
  EXPECT_NEAR(p.sigma_z.back(), smax, 1e-9 * smax);
  EXPECT_EQ(p.sigma_z.front(), 0.0);  // free surface: no top layer
  EXPECT_EQ(p.a_x[25], 1.0);
  EXPECT_EQ(p.b_x[25], 0.0);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_GE(p.sigma_x[i], p.sigma_x[i + 1]);
    EXPECT_GT(p.a_x[i], 0.0);
    EXPECT_LE(p.a_x[i], 1.0);
    EXPECT_NEAR(p.a_x[i] + p.b_x[i], 1.0, 1e-15);
    EXPECT_NEAR(p.a_x[i], std::exp(-p.sigma_x[i] * 1e-3), 1e-15);
  }
  EXPECT_TRUE(p.in_halo(59, 25));
  EXPECT_TRUE(p.in_halo(30, 0));
  EXPECT_FALSE(p.in_halo(0, 25));
  EXPECT_FALSE(p.in_halo(30, 25));
}

TEST(Pml, TooWide) {
  auto g = VelocityGrid::constant(20, 30, 10, 10, 2000);
  EXPECT_THROW(pml_profiles(g, config(1e-3, 10, 10), Boundary::PmlAllSides), std::invalid_argument);
}

TEST(Simulate, ZeroWaveletGivesZeroData) {
  auto g = crfwi::testing::random_grid(30, 30, 10, 1);
  Wavelet w{1e-3, std::vector<double>(200, 0.0)};
  const auto r = simulate_shot(g, w, single({10, 10}, {15, 20}, Boundary::PmlAllSides), 0,
                               config(1e-3, 200, 5), HistoryPolicy::Full);
  for (double x : r.gather.data) EXPECT_EQ(x, 0.0);
  for (const auto& s : r.history.snapshots)
    for (double x : s) EXPECT_EQ(x, 0.0);
}

TEST(Simulate, ZeroInitialState) {
  auto g = crfwi::testing::random_grid(30, 30, 10, 1);
  const auto w = ricker(10, 1e-3, 200);
  const auto r = simulate_shot(g, w, single({10, 10}, {10, 10}, Boundary::PmlAllSides), 0,
                               config(1e-3, 200, 5), HistoryPolicy::Full);
  ASSERT_EQ(r.history.steps.front(), 0u);
  for (double x : r.history.snapshots.front()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(r.gather.at(0, 0), 0.0);
}

TEST(Simulate, FirstArrivalTraveltime1d) {
  // In 1D the Green's function is a step, so the time derivative of the trace
  // reproduces the wavelet delayed by d / v. At 5 Hz there are 40 cells per
  // wavelength, so grid dispersion stays under a time step over 100 cells.
  const double v = 2000, dx = 10, dt = 1e-3, f = 5;
  auto g = VelocityGrid::constant(200, 1, dx, dx, v);
  const auto w = ricker(f, dt, 1000);
  const auto r = simulate_shot(g, w, single({40, 0}, {140, 0}, Boundary::PmlAllSides), 0,
                               config(dt, 1000, 20));
  std::size_t best = 0;
  double peak = -1;
  for (std::size_t k = 0; k + 1 < 1000; ++k) {
    const double d = r.gather.at(0, k + 1) - r.gather.at(0, k);
    if (d > peak) peak = d, best = k;
  }
  auto deriv = [&](std::size_t k) { return r.gather.at(0, k + 1) - r.gather.at(0, k); };
  const double y0 = deriv(best - 1), y1 = deriv(best), y2 = deriv(best + 1);
  const double shift = 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2);
  const double t_peak = (double(best) + 0.5 + shift) * dt;
  EXPECT_NEAR(t_peak, 1000.0 / v + 1.0 / f, 2 * dt);
}

TEST(Simulate, SourceLinearity) {
  auto g = crfwi::testing::random_grid(30, 40, 10, 2);
  const auto w1 = ricker(10, 1e-3, 300);
  Wavelet w2{1e-3, crfwi::testing::random_vector(300, 3)};
  Wavelet mix{1e-3, std::vector<double>(300)};
  for (std::size_t k = 0; k < 300; ++k) mix.samples[k] = 2.5 * w1.samples[k] - 0.75 * w2.samples[k];
  const auto geo = single({10, 12}, {20, 30}, Boundary::FreeSurfaceTop);
  const auto cfg = config(1e-3, 300, 6);
  const auto a = simulate_shot(g, w1, geo, 0, cfg).gather;
  const auto b = simulate_shot(g, w2, geo, 0, cfg).gather;
  const auto c = simulate_shot(g, mix, geo, 0, cfg).gather;
  double scale = 0;
  for (double x : c.data) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < c.data.size(); ++i)
    EXPECT_NEAR(c.data[i], 2.5 * a.data[i] - 0.75 * b.data[i], 1e-12 * scale);
}

TEST(Simulate, Reciprocity) {
  auto g = VelocityGrid::constant(60, 70, 10, 10, 2000);
  const auto w = ricker(12, 1e-3, 600);
  const auto cfg = config(1e-3, 600, 12);
  const auto ab = simulate_shot(g, w, single({20, 18}, {35, 50}, Boundary::PmlAllSides), 0, cfg);
  const auto ba = simulate_shot(g, w, single({35, 50}, {20, 18}, Boundary::PmlAllSides), 0, cfg);
  EXPECT_LT(rel_l2(ab.gather.trace(0), ba.gather.trace(0)), 0.01);
}

TEST(Simulate, AbsorbingLayerEnergyLeak) {
  auto g = VelocityGrid::constant(80, 80, 10, 10, 2000);
  const auto cfg = config(1e-3, 1500, 20);
  const auto w = ricker(15, 1e-3, 1500);
  Propagator prop(g, cfg, Boundary::PmlAllSides);
  auto s = prop.initial_state();
  const auto src = source_series(w, cfg);
  const std::size_t cell = g.index(40, 40);
  std::vector<double> energy;
  for (std::size_t k = 0; k < cfg.nt; ++k) {
    prop.step(s, cell, src[k], {});
    double e = 0;
    for (double u : s.u) e += u * u;
    energy.push_back(e);
  }
  const double peak = *std::max_element(energy.begin(), energy.end());
  // Waves reach the outer edge by ~0.45 s; afterwards only reflections remain.
  const double late = *std::max_element(energy.begin() + 800, energy.end());
  EXPECT_LT(late, 1e-3 * peak);
}

TEST(Simulate, BlowupNamesStep) {
  auto g = VelocityGrid::constant(30, 30, 10, 10, 2000);
  const auto w = ricker(10, 8e-3, 500);
  try {
    simulate_shot(g, w, single({10, 10}, {15, 15}, Boundary::PmlAllSides), 0, config(8e-3, 500, 5));
    FAIL() << "expected an error";
  } catch (const NumericBlowup& e) {
    EXPECT_GT(e.step(), 0u);
  } catch (const std::invalid_argument&) {
    // A CFL pre-check refusing the run is also acceptable.
  }
}

TEST(Simulate, GeometryValidation) {
  auto g = VelocityGrid::constant(10, 10, 10, 10, 2000);
  const auto w = ricker(10, 1e-3, 50);
  EXPECT_THROW(simulate_shot(g, w, single({10, 0}, {0, 0}, Boundary::PmlAllSides), 0, config(1e-3, 50, 2)),
               std::invalid_argument);
  EXPECT_THROW(simulate_shot(g, w, single({1, 1}, {2, 2}, Boundary::PmlAllSides), 1, config(1e-3, 50, 2)),
               std::invalid_argument);
}
