#include "crfwi/inversion.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "crfwi/errors.hpp"

namespace crfwi {

ShotData ShotData::all(std::vector<ShotGather> gathers) {
  ShotData d;
  d.shots.resize(gathers.size());
  for (std::size_t i = 0; i < gathers.size(); ++i) d.shots[i] = i;
  d.gathers = std::move(gathers);
  return d;
}

void ShotData::validate() const {
  if (gathers.size() != shots.size())
    throw std::invalid_argument("shot data: gathers and shot indices differ in length");
}

void Scenario::validate() const {
  if (!(noise_sigma_factor >= 0.0) || !std::isfinite(noise_sigma_factor))
    throw std::invalid_argument("noise factor must be finite and >= 0");
  if (highpass_cutoff_hz && !(*highpass_cutoff_hz > 0.0))
    throw std::invalid_argument("high-pass cutoff must be positive");
  if (shot_subset && shot_subset->empty())
    throw std::invalid_argument("shot subset must not be empty");
}

namespace {

double gather_std(const ShotGather& g) {
  if (g.data.empty()) return 0.0;
  double mean = 0.0;
  for (double v : g.data) mean += v;
  mean /= double(g.data.size());
  double var = 0.0;
  for (double v : g.data) var += (v - mean) * (v - mean);
  return std::sqrt(var / double(g.data.size()));
}

}  // namespace

ShotData degrade_data(const ShotData& data, const Scenario& scenario, std::uint64_t seed) {
  data.validate();
  scenario.validate();
  ShotData out;
  if (scenario.shot_subset) {
    for (std::size_t want : *scenario.shot_subset) {
      const auto it = std::find(data.shots.begin(), data.shots.end(), want);
      if (it == data.shots.end())
        throw std::invalid_argument("shot subset index " + std::to_string(want) +
                                    " is not present in the data");
      const auto pos = static_cast<std::size_t>(it - data.shots.begin());
      out.shots.push_back(want);
      out.gathers.push_back(data.gathers[pos]);
    }
  } else {
    out = data;
  }
  if (scenario.highpass_cutoff_hz) {
    for (auto& g : out.gathers) g = highpass_band(g, *scenario.highpass_cutoff_hz);
  }
  if (scenario.noise_sigma_factor > 0.0) {
    for (std::size_t i = 0; i < out.gathers.size(); ++i) {
      auto& g = out.gathers[i];
      const double sigma = scenario.noise_sigma_factor * gather_std(g);
      std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                        std::uint32_t(out.shots[i]), std::uint32_t(out.shots[i] >> 32)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> noise(0.0, 1.0);
      for (double& v : g.data) v += sigma * noise(rng);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filters

namespace {

void check_cutoff(double cutoff_hz, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("sample interval must be positive");
  const double nyquist = 0.5 / dt;
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < nyquist))
    throw std::invalid_argument("cutoff must lie in (0, Nyquist = " + std::to_string(nyquist) +
                                " Hz)");
}

std::vector<Biquad> butterworth(double cutoff_hz, double dt, bool high) {
  check_cutoff(cutoff_hz, dt);
  constexpr int order = 4;
  const double k = std::tan(std::numbers::pi * cutoff_hz * dt);
  std::vector<Biquad> sos;
  for (int p = 0; p < order / 2; ++p) {
    // Pole pair angle of the analog prototype gives the section's Q.
    const double theta = std::numbers::pi * double(2 * p + 1) / double(2 * order);
    const double q = 1.0 / (2.0 * std::sin(theta));
    const double norm = 1.0 / (1.0 + k / q + k * k);
    Biquad s{};
    if (high) {
      s.b0 = norm;
      s.b1 = -2.0 * norm;
      s.b2 = norm;
    } else {
      s.b0 = k * k * norm;
      s.b1 = 2.0 * s.b0;
      s.b2 = s.b0;
    }
    s.a1 = 2.0 * (k * k - 1.0) * norm;
    s.a2 = (1.0 - k / q + k * k) * norm;
    sos.push_back(s);
  }
  return sos;
}

struct SectionState {
  double z1, z2;
};

// Steady-state transposed-direct-form state for a unit-step input.
std::vector<SectionState> sos_zi(std::span<const Biquad> sos) {
  std::vector<SectionState> zi;
  double scale = 1.0;
  for (const auto& s : sos) {
    const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    zi.push_back({scale * (dc - s.b0), scale * (s.b2 - s.a2 * dc)});
    scale *= dc;
  }
  return zi;
}

void sosfilt_inplace(std::span<const Biquad> sos, std::vector<double>& x,
                     std::vector<SectionState> z) {
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const auto& s = sos[i];
    double z1 = z[i].z1, z2 = z[i].z2;
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
  }
}

}  // namespace

std::vector<Biquad> butterworth_lowpass(double cutoff_hz, double dt) {
  return butterworth(cutoff_hz, dt, false);
}

std::vector<Biquad> butterworth_highpass(double cutoff_hz, double dt) {
  return butterworth(cutoff_hz, dt, true);
}

std::vector<double> sosfiltfilt(std::span<const Biquad> sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (n == 1) {
    // A single sample is its own steady state.
    double dc = 1.0;
    for (const auto& s : sos) dc *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    return {x[0] * dc * dc};
  }
  const std::size_t pad = std::min<std::size_t>(3 * (2 * sos.size() + 1), n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = sos_zi(sos);
  auto scaled = [&](double x0) {
    auto z = zi;
    for (auto& s : z) {
      s.z1 *= x0;
      s.z2 *= x0;
    }
    return z;
  };
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> lowpass(std::span<const double> x, double dt, double cutoff_hz) {
  return sosfiltfilt(butterworth_lowpass(cutoff_hz, dt), x);
}

std::vector<double> highpass(std::span<const double> x, double dt, double cutoff_hz) {
  return sosfiltfilt(butterworth_highpass(cutoff_hz, dt), x);
}

namespace {

ShotGather filter_gather(const ShotGather& g, const std::vector<Biquad>& sos) {
  ShotGather out = g;
  for (std::size_t r = 0; r < g.n_receivers; ++r) {
    const auto y = sosfiltfilt(sos, g.trace(r));
    std::copy(y.begin(), y.end(), out.trace(r).begin());
  }
  return out;
}

}  // namespace

ShotGather lowpass_band(const ShotGather& gather, double cutoff_hz) {
  return filter_gather(gather, butterworth_lowpass(cutoff_hz, gather.dt));
}

Wavelet lowpass_band(const Wavelet& wavelet, double cutoff_hz) {
  return {wavelet.dt, lowpass(wavelet.samples, wavelet.dt, cutoff_hz)};
}

ShotGather highpass_band(const ShotGather& gather, double cutoff_hz) {
  return filter_gather(gather, butterworth_highpass(cutoff_hz, gather.dt));
}

std::vector<double> band_schedule() { return {4.0, 6.0, 8.0, 10.0, 12.0, 14.0}; }

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::make(std::size_t n, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be > 0");
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st) {
  if (params.size() != grads.size() || st.m.size() != params.size() ||
      st.v.size() != params.size())
    throw std::invalid_argument("adam: parameter, gradient and moment sizes differ");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw NumericBlowup("non-finite gradient at parameter index " + std::to_string(i), st.step);
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double mh = st.m[i] / c1;
    const double vh = st.v[i] / c2;
    params[i] -= st.lr * mh / (std::sqrt(vh) + st.eps);
  }
}

// ---------------------------------------------------------------------------
// Inversion loop

namespace {

void require_stable(const VelocityGrid& model, const SolverConfig& cfg) {
  const auto rep = stability_check(model, cfg);
  if (!rep.ok) throw NumericBlowup("model violates the stability limit: " + rep.message, 0);
}

double data_misfit(const VelocityGrid& model, const Wavelet& wavelet,
                   const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                   const ShotData& observed) {
  double total = 0.0;
  for (std::size_t i = 0; i < observed.shots.size(); ++i) {
    const auto syn = simulate_shot(model, wavelet, geometry, observed.shots[i], cfg).gather;
    total += l2_misfit({&syn, 1}, {&observed.gathers[i], 1}).value;
  }
  return total;
}

}  // namespace

ParamGradient param_gradient(const Representation& repr, const Wavelet& wavelet,
                             const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                             const ShotData& observed, const InversionMethod& method,
                             std::span<const std::size_t> batch) {
  const VelocityGrid model = repr.evaluate();
  require_stable(model, cfg);
  std::vector<ShotGather> obs;
  std::vector<std::size_t> shots;
  if (batch.empty()) {
    obs = observed.gathers;
    shots = observed.shots;
  } else {
    for (auto pos : batch) {
      obs.push_back(observed.gathers.at(pos));
      shots.push_back(observed.shots.at(pos));
    }
  }
  auto gr = model_gradient(model, wavelet, geometry, cfg, obs, {method.mask_pml}, shots);
  ParamGradient out;
  out.misfit = gr.misfit.value;
  out.objective = gr.misfit.value;
  if (method.tv) {
    const auto tv = tv_term(model, method.tv_alpha_x, method.tv_alpha_z);
    out.objective += tv.value;
    gr.gradient += tv.gradient;
  }
  out.grad = repr.backprop_params(gr.gradient);
  return out;
}

InversionReport run_inversion(const InversionProblem& problem, const InversionMethod& method) {
  const auto t0 = std::chrono::steady_clock::now();
  problem.m0.validate();
  problem.observed.validate();
  if (problem.truth && !problem.truth->same_shape(problem.m0))
    throw std::invalid_argument("truth and initial model differ in shape");
  if (method.metrics_every == 0) throw std::invalid_argument("metrics_every must be >= 1");
  if (method.bands.size() > std::max<std::size_t>(method.epochs, 1))
    throw std::invalid_argument("more frequency bands than epochs");

  const SolverConfig cfg = freeze_pml(problem.cfg, problem.m0);
  auto repr = init_repr(method.repr, problem.m0, method.seed);
  const bool grid = std::holds_alternative<DirectGridSpec>(method.repr.variant);
  const double lr =
      std::isnan(method.lr) ? (grid ? kGridLearningRate : kNetworkLearningRate) : method.lr;
  AdamState adam = AdamState::make(repr->param_count(), lr);

  struct Stage {
    Wavelet wavelet;
    ShotData observed;
  };
  std::vector<Stage> stages;
  if (method.bands.empty()) {
    stages.push_back({problem.wavelet, problem.observed});
  } else {
    for (double fc : method.bands) {
      Stage s{lowpass_band(problem.wavelet, fc), problem.observed};
      for (auto& g : s.observed.gathers) g = lowpass_band(g, fc);
      stages.push_back(std::move(s));
    }
  }
  auto stage_of = [&](std::size_t epoch) -> const Stage& {
    if (stages.size() == 1 || method.epochs == 0) return stages.front();
    return stages[std::min(stages.size() - 1, epoch * stages.size() / method.epochs)];
  };

  std::mt19937_64 batch_rng(method.seed ^ 0x9e3779b97f4a7c15ull);
  const std::size_t n_obs = problem.observed.shots.size();
  const bool batching = method.minibatch > 0 && method.minibatch < n_obs;

  InversionReport report;
  auto record_metrics = [&](std::size_t epoch, const VelocityGrid& model) {
    if (!problem.truth) return;
    report.metrics.push_back({epoch, evaluate_metrics(crop_model(model, problem.halo),
                                                      crop_model(*problem.truth, problem.halo))});
  };

  for (std::size_t epoch = 0; epoch < method.epochs; ++epoch) {
    const Stage& st = stage_of(epoch);
    std::vector<std::size_t> batch;
    if (batching) {
      std::vector<std::size_t> order(n_obs);
      for (std::size_t i = 0; i < n_obs; ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), batch_rng);
      batch.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(method.minibatch));
      std::sort(batch.begin(), batch.end());
    }
    ParamGradient pg;
    try {
      pg = param_gradient(*repr, st.wavelet, problem.geometry, cfg, st.observed, method, batch);
    } catch (const NumericBlowup& e) {
      throw NumericBlowup("epoch " + std::to_string(epoch) + ": " + e.what(), e.step());
    }
    report.misfit.push_back(pg.misfit);
    if (epoch % method.metrics_every == 0 || (method.snapshot_every && epoch % method.snapshot_every == 0)) {
      const VelocityGrid model = repr->evaluate();
      if (epoch % method.metrics_every == 0) record_metrics(epoch, model);
      if (method.snapshot_every && epoch % method.snapshot_every == 0)
        report.snapshots.emplace_back(epoch, model);
    }
    try {
      adam_step(repr->params(), pg.grad, adam);
    } catch (const NumericBlowup& e) {
      throw NumericBlowup("epoch " + std::to_string(epoch) + ": " + e.what(), e.step());
    }
  }

  report.final_model = repr->evaluate();
  const Stage& last = stage_of(method.epochs ? method.epochs - 1 : 0);
  try {
    require_stable(report.final_model, cfg);
    report.misfit.push_back(
        data_misfit(report.final_model, last.wavelet, problem.geometry, cfg, last.observed));
  } catch (const NumericBlowup& e) {
    throw NumericBlowup("final evaluation: " + std::string(e.what()), e.step());
  }
  record_metrics(method.epochs, report.final_model);
  if (method.snapshot_every && method.epochs % method.snapshot_every == 0 && method.epochs > 0)
    report.snapshots.emplace_back(method.epochs, report.final_model);
  report.final_params.assign(repr->params().begin(), repr->params().end());
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void write_inversion_csv(const InversionReport& report, std::ostream& os) {
  os << "epoch,misfit,mse,mae,ssim\n";
  std::size_t mi = 0;
  char buf[64];
  for (std::size_t e = 0; e < report.misfit.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.10g", report.misfit[e]);
    os << e << ',' << buf;
    while (mi < report.metrics.size() && report.metrics[mi].epoch < e) ++mi;
    if (mi < report.metrics.size() && report.metrics[mi].epoch == e) {
      const auto& m = report.metrics[mi].metrics;
      std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g", m.mse, m.mae, m.ssim);
      os << buf;
    } else {
      os << ",,,";
    }
    os << '\n';
  }
}

}  // namespace crfwi
