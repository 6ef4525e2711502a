#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "crfwi/adjoint.hpp"
#include "crfwi/model_core.hpp"
#include "crfwi/models.hpp"
#include "crfwi/representations.hpp"
#include "crfwi/wave_solver.hpp"

namespace crfwi {

/// Observed gathers tagged with the geometry shot each one belongs to.
struct ShotData {
  std::vector<ShotGather> gathers;
  std::vector<std::size_t> shots;

  static ShotData all(std::vector<ShotGather> gathers);
  void validate() const;
};

struct Scenario {
  double noise_sigma_factor = 0.0;  // k in k * sigma0
  std::optional<double> highpass_cutoff_hz;
  std::optional<std::vector<std::size_t>> shot_subset;  // geometry shot indices

  void validate() const;
};

/// Applies, in order, shot selection, zero-phase high-pass, then additive
/// Gaussian noise. sigma0 is the standard deviation of each shot's input
/// gather and the noise stream of shot s is seeded from (seed, s), so noise and
/// subset selection commute.
ShotData degrade_data(const ShotData& data, const Scenario& scenario, std::uint64_t seed);

// Zero-phase fourth-order Butterworth filters (two second-order sections run
// forward and backward, steady-state initial conditions, odd padding).
struct Biquad {
  double b0, b1, b2, a1, a2;
};

std::vector<Biquad> butterworth_lowpass(double cutoff_hz, double dt);
std::vector<Biquad> butterworth_highpass(double cutoff_hz, double dt);
std::vector<double> sosfiltfilt(std::span<const Biquad> sos, std::span<const double> x);

std::vector<double> lowpass(std::span<const double> x, double dt, double cutoff_hz);
std::vector<double> highpass(std::span<const double> x, double dt, double cutoff_hz);
ShotGather lowpass_band(const ShotGather& gather, double cutoff_hz);
Wavelet lowpass_band(const Wavelet& wavelet, double cutoff_hz);
ShotGather highpass_band(const ShotGather& gather, double cutoff_hz);

/// Multiscale cutoffs 4, 6, ..., 14 Hz.
std::vector<double> band_schedule();

inline constexpr double kGridLearningRate = 5.0;
inline constexpr double kNetworkLearningRate = 1e-4;

struct AdamState {
  std::vector<double> m, v;
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState make(std::size_t n, double lr);
};

/// One bias-corrected Adam update. Throws NumericBlowup naming the first
/// non-finite gradient index (parameters are left untouched in that case).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

struct InversionProblem {
  VelocityGrid m0;
  std::optional<VelocityGrid> truth;
  AcquisitionGeometry geometry;
  Wavelet wavelet;
  SolverConfig cfg;
  ShotData observed;
  Padding halo;  // metrics are taken on the model with this halo removed
};

struct InversionMethod {
  ReprSpec repr;
  std::size_t epochs = 100;
  double lr = std::numeric_limits<double>::quiet_NaN();  // NaN: 5 for grids, 1e-4 otherwise
  bool tv = false;
  double tv_alpha_x = kTvDefaultAlpha;
  double tv_alpha_z = kTvDefaultAlpha;
  // Low-pass cutoffs applied in sequence, each for an equal share of the epochs.
  std::vector<double> bands;
  std::size_t minibatch = 0;  // shots per epoch; 0 uses every shot
  std::size_t metrics_every = 10;
  std::size_t snapshot_every = 0;
  bool mask_pml = true;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  Metrics metrics;
};

/// misfit[k] is the data misfit after k updates, so a run of E epochs records
/// E + 1 values. Metrics are taken every `metrics_every` updates and at the end.
struct InversionReport {
  std::vector<double> misfit;
  std::vector<EpochMetrics> metrics;
  std::vector<std::pair<std::size_t, VelocityGrid>> snapshots;
  VelocityGrid final_model;
  std::vector<double> final_params;
  double wall_time_s = 0.0;
};

/// Gradient of the (optionally TV-regularized) misfit with respect to the
/// representation parameters at its current state.
struct ParamGradient {
  double objective = 0.0;
  double misfit = 0.0;
  std::vector<double> grad;
};

ParamGradient param_gradient(const Representation& repr, const Wavelet& wavelet,
                             const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                             const ShotData& observed, const InversionMethod& method,
                             std::span<const std::size_t> batch = {});

InversionReport run_inversion(const InversionProblem& problem, const InversionMethod& method);

/// `epoch,misfit,mse,mae,ssim` rows; metric columns are blank where not computed.
void write_inversion_csv(const InversionReport& report, std::ostream& os);

}  // namespace crfwi
