#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "crfwi/errors.hpp"
#include "crfwi/inversion.hpp"
#include "crfwi/models.hpp"
#include "test_util.hpp"

using namespace crfwi;
using crfwi::testing::random_vector;

namespace {

ShotData noisy_data(std::size_t shots, std::size_t nr, std::size_t nt, std::uint64_t seed) {
  std::vector<ShotGather> g;
  for (std::size_t s = 0; s < shots; ++s) {
    auto x = ShotGather::zeros(nr, nt, 1e-3);
    x.data = random_vector(nr * nt, seed + s);
    g.push_back(std::move(x));
  }
  return ShotData::all(std::move(g));
}

std::vector<double> sine(double f, double dt, std::size_t n, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) x[k] = std::sin(2 * std::numbers::pi * f * double(k) * dt + phase);
  return x;
}

// Amplitude of frequency f over the central half of x (edge transients excluded).
double amplitude(const std::vector<double>& x, double f, double dt) {
  const std::size_t a = x.size() / 4, b = 3 * x.size() / 4;
  double c = 0, s = 0;
  for (std::size_t k = a; k < b; ++k) {
    const double w = 2 * std::numbers::pi * f * double(k) * dt;
    c += x[k] * std::cos(w), s += x[k] * std::sin(w);
  }
  return 2 * std::hypot(c, s) / double(b - a);
}

struct Layered {
  VelocityGrid truth, m0;
  Padding pad;
  AcquisitionGeometry geo;
  Wavelet wavelet;
  SolverConfig cfg;
  ShotData observed;
};

Layered layered_problem() {
  Layered p;
  const auto core = layered_1d(50, 10, 1500, 2000, 25);
  auto start = core;
  for (std::size_t i = 0; i < start.size(); ++i) start.values[i] += 60.0 * std::sin(0.25 * std::numbers::pi * double(i));
  const auto pad = halo_padding(core, 10, Boundary::PmlAllSides);
  p.pad = pad;
  p.truth = pad_model(core, pad);
  p.m0 = pad_model(start, pad);
  p.geo.boundary = Boundary::PmlAllSides;
  p.geo.sources = {{pad.top + 2, 0}};
  p.geo.receivers = {{pad.top + 2, 0}};
  p.cfg.dt = 1e-3;
  p.cfg.nt = 500;
  p.cfg.pml_width = 10;
  p.wavelet = ricker(15, p.cfg.dt, p.cfg.nt);
  p.cfg = freeze_pml(p.cfg, p.truth);
  p.observed = ShotData::all(simulate_all(p.truth, p.wavelet, p.geo, p.cfg));
  return p;
}

InversionProblem as_problem(const Layered& l) {
  return {l.m0, l.truth, l.geo, l.wavelet, l.cfg, l.observed};
}

}  // namespace

TEST(Degrade, IdentityScenario) {
  const auto d = noisy_data(3, 4, 50, 1);
  const auto out = degrade_data(d, Scenario{}, 7);
  ASSERT_EQ(out.gathers.size(), 3u);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(out.gathers[s].data, d.gathers[s].data);
  EXPECT_EQ(out.shots, d.shots);
}

TEST(Degrade, NoiseLevel) {
  const auto d = noisy_data(1, 10, 20000, 2);
  Scenario sc;
  sc.noise_sigma_factor = 8.0;
  const auto out = degrade_data(d, sc, 3);
  double m0 = 0, s0 = 0, m1 = 0, s1 = 0;
  const auto& a = d.gathers[0].data;
  const auto& b = out.gathers[0].data;
  for (double v : a) m0 += v;
  m0 /= double(a.size());
  for (double v : a) s0 += (v - m0) * (v - m0);
  s0 = std::sqrt(s0 / double(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) m1 += b[i] - a[i];
  m1 /= double(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s1 += (b[i] - a[i] - m1) * (b[i] - a[i] - m1);
  s1 = std::sqrt(s1 / double(a.size()));
  EXPECT_NEAR(s1 / (8.0 * s0), 1.0, 0.02);
}

TEST(Degrade, SubsetAndNoiseCommute) {
  const auto d = noisy_data(5, 3, 40, 4);
  Scenario noise, subset, both;
  noise.noise_sigma_factor = 2.0;
  subset.shot_subset = std::vector<std::size_t>{4, 1};
  const auto a = degrade_data(degrade_data(d, subset, 9), noise, 9);
  const auto b = degrade_data(degrade_data(d, noise, 9), subset, 9);
  ASSERT_EQ(a.shots, (std::vector<std::size_t>{4, 1}));
  EXPECT_EQ(a.shots, b.shots);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.gathers[i].data, b.gathers[i].data);
}

TEST(Degrade, Errors) {
  const auto d = noisy_data(2, 3, 40, 4);
  Scenario empty;
  empty.shot_subset = std::vector<std::size_t>{};
  EXPECT_THROW(degrade_data(d, empty, 0), std::invalid_argument);
  Scenario missing;
  missing.shot_subset = std::vector<std::size_t>{7};
  EXPECT_THROW(degrade_data(d, missing, 0), std::invalid_argument);
  Scenario negative;
  negative.noise_sigma_factor = -1;
  EXPECT_THROW(degrade_data(d, negative, 0), std::invalid_argument);
}

TEST(Filters, HighpassSuppressesLowBand) {
  const double dt = 1e-3;
  const std::size_t n = 20000;
  for (double f : {1.0, 2.0, 3.0}) {
    const auto x = sine(f, dt, n, 0.3);
    const auto y = highpass(x, dt, 6.0);
    EXPECT_LT(amplitude(y, f, dt), 1e-2 * amplitude(x, f, dt)) << f << " Hz";
  }
  const auto pass = sine(25.0, dt, n);
  EXPECT_NEAR(amplitude(highpass(pass, dt, 6.0), 25.0, dt), 1.0, 1e-2);
}

TEST(Filters, LowpassRemovesHighTone) {
  const double dt = 1e-3;
  const auto x = sine(10.0, dt, 4000);
  const auto y = lowpass(x, dt, 4.0);
  double ex = 0, ey = 0;
  for (std::size_t k = 0; k < x.size(); ++k) ex += x[k] * x[k], ey += y[k] * y[k];
  EXPECT_LT(ey, 1e-3 * ex);
}

TEST(Filters, NearNyquistCutoffPassesBandLimitedSignal) {
  const double dt = 1e-3;
  const auto w = ricker(10, dt, 1000);
  const auto y = lowpass(w.samples, dt, 0.5 / dt - 1.0);
  double num = 0, den = 0;
  for (std::size_t k = 0; k < y.size(); ++k) num += std::pow(y[k] - w.samples[k], 2), den += std::pow(w.samples[k], 2);
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST(Filters, DcPassesLowpass) {
  const std::vector<double> x(300, 2.5);
  for (double v : lowpass(x, 1e-3, 5.0)) EXPECT_NEAR(v, 2.5, 1e-9);
}

TEST(Filters, CutoffAtNyquistRejected) {
  EXPECT_THROW(butterworth_lowpass(500.0, 1e-3), std::invalid_argument);
  EXPECT_THROW(butterworth_highpass(0.0, 1e-3), std::invalid_argument);
  EXPECT_THROW(lowpass_band(ricker(8, 1e-3, 100), 600.0), std::invalid_argument);
}

TEST(Filters, BandSchedule) {
  EXPECT_EQ(band_schedule(), (std::vector<double>{4, 6, 8, 10, 12, 14}));
}

TEST(Adam, ZeroGradientDecaysMoments) {
  std::vector<double> p{1.0, -2.0};
  auto st = AdamState::make(2, 0.1);
  st.m = {0.5, -0.5};
  st.v = {0.25, 0.25};
  std::vector<double> g{0.0, 0.0};
  const auto before = p;
  // With a zero gradient the update is driven only by the decayed first moment.
  adam_step(p, g, st);
  EXPECT_DOUBLE_EQ(st.m[0], 0.45);
  EXPECT_DOUBLE_EQ(st.v[0], 0.25 * 0.999);
  auto fresh = AdamState::make(2, 0.1);
  std::vector<double> q = before;
  adam_step(q, g, fresh);
  EXPECT_EQ(q, before);
  EXPECT_EQ(fresh.m, (std::vector<double>{0, 0}));
  EXPECT_EQ(fresh.step, 1u);
}

TEST(Adam, ConstantGradientStepTendsToLearningRate) {
  std::vector<double> p{0.0};
  auto st = AdamState::make(1, 0.01);
  std::vector<double> g{3.0};
  double prev = 0.0;
  for (int k = 0; k < 2000; ++k) {
    prev = p[0];
    adam_step(p, g, st);
  }
  EXPECT_NEAR(prev - p[0], 0.01, 1e-8);
  // First step is exactly lr * g / (|g| + eps).
  std::vector<double> q{0.0};
  auto s2 = AdamState::make(1, 0.01);
  adam_step(q, g, s2);
  EXPECT_NEAR(q[0], -0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
}

TEST(Adam, NonFiniteGradientNamesIndex) {
  std::vector<double> p{0.0, 0.0, 0.0};
  auto st = AdamState::make(3, 0.01);
  std::vector<double> g{1.0, NAN, INFINITY};
  try {
    adam_step(p, g, st);
    FAIL();
  } catch (const NumericBlowup& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
  EXPECT_EQ(p, (std::vector<double>{0, 0, 0}));
}

TEST(Inversion, ZeroEpochs) {
  const auto l = layered_problem();
  InversionMethod m;
  m.epochs = 0;
  const auto r = run_inversion(as_problem(l), m);
  ASSERT_EQ(r.misfit.size(), 1u);
  EXPECT_EQ(r.final_model.values, l.m0.values);
  EXPECT_DOUBLE_EQ(r.misfit[0], fwi_objective(l.m0, l.wavelet, l.geo, freeze_pml(l.cfg, l.m0),
                                              l.observed.gathers));
  std::ostringstream os;
  write_inversion_csv(r, os);
  EXPECT_EQ(os.str().substr(0, 25), "epoch,misfit,mse,mae,ssim");
}

TEST(Inversion, LayeredGridRecovery) {
  const auto l = layered_problem();
  InversionMethod m;
  m.epochs = 200;
  const auto r = run_inversion(as_problem(l), m);
  const auto truth = crop_model(l.truth, l.pad);
  const double before = evaluate_metrics(crop_model(l.m0, l.pad), truth).mse;
  const double after = evaluate_metrics(crop_model(r.final_model, l.pad), truth).mse;
  EXPECT_EQ(r.misfit.size(), 201u);
  EXPECT_LT(after, 0.5 * before);
}

TEST(Inversion, MonotoneWithSmallSteps) {
  const auto l = layered_problem();
  InversionMethod m;
  m.epochs = 30;
  m.lr = 0.2;
  const auto r = run_inversion(as_problem(l), m);
  for (std::size_t k = 1; k < r.misfit.size(); ++k)
    EXPECT_LE(r.misfit[k], r.misfit[k - 1] * (1 + 1e-6)) << "epoch " << k;
}

TEST(Inversion, ReproducibleBitwise) {
  const auto l = layered_problem();
  InversionMethod m;
  m.epochs = 5;
  m.repr.variant = SirenSpec{2, 16, 30};
  m.minibatch = 1;
  m.seed = 11;
  const auto a = run_inversion(as_problem(l), m), b = run_inversion(as_problem(l), m);
  EXPECT_EQ(a.final_model.values, b.final_model.values);
  EXPECT_EQ(a.misfit, b.misfit);
}

TEST(Inversion, ChainRuleMatchesExplicitComposition) {
  const auto l = layered_problem();
  ReprSpec spec;
  spec.variant = SirenSpec{2, 16, 30};
  auto repr = init_repr(spec, l.m0, 2);
  InversionMethod m;
  m.repr = spec;
  const auto cfg = freeze_pml(l.cfg, l.m0);
  const auto pg = param_gradient(*repr, l.wavelet, l.geo, cfg, l.observed, m);
  const auto mg = model_gradient(repr->evaluate(), l.wavelet, l.geo, cfg, l.observed.gathers);
  EXPECT_EQ(pg.grad, repr->backprop_params(mg.gradient));
  EXPECT_EQ(pg.misfit, mg.misfit.value);
}

TEST(Inversion, BandsAndMetricsCadence) {
  const auto l = layered_problem();
  InversionMethod m;
  m.epochs = 12;
  m.bands = {8.0, 14.0};
  m.metrics_every = 5;
  const auto r = run_inversion(as_problem(l), m);
  std::vector<std::size_t> epochs;
  for (const auto& e : r.metrics) epochs.push_back(e.epoch);
  EXPECT_EQ(epochs, (std::vector<std::size_t>{0, 5, 10, 12}));
}

TEST(Inversion, ShapeErrors) {
  auto l = layered_problem();
  auto p = as_problem(l);
  p.truth = VelocityGrid::constant(5, 1, 10, 10, 2000);
  EXPECT_THROW(run_inversion(p, InversionMethod{}), std::invalid_argument);
}
