#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "crfwi/model_core.hpp"

namespace crfwi {

struct SolverConfig {
  double dt = 1.9e-3;
  std::size_t nt = 1000;
  std::size_t pml_width = 20;
  // NaN selects 3 * v_ref * ln(1000) / (2 * pml_width * h) per axis.
  double pml_max_damping = std::numeric_limits<double>::quiet_NaN();
  // Velocity used for the default damping; NaN uses the grid's maximum. Freeze
  // it (see freeze_pml) whenever the model is being differentiated, otherwise
  // the absorbing layer itself moves with the model.
  double pml_reference_velocity = std::numeric_limits<double>::quiet_NaN();
  // Forward-state checkpoint spacing used by the adjoint pass.
  std::size_t checkpoint_stride = 10;
};

struct StabilityReport {
  bool ok = true;
  double dt = 0.0;
  double dt_limit = 0.0;
  std::string message;
};

/// Copy of `cfg` with the PML reference velocity pinned to `grid`'s maximum
/// (unless already set).
SolverConfig freeze_pml(SolverConfig cfg, const VelocityGrid& grid);

/// CFL check for the five-point scheme: dt <= min(h) / (v_max * sqrt(dims)).
StabilityReport stability_check(const VelocityGrid& grid, const SolverConfig& cfg);

/// Per-axis absorbing-layer coefficients. The auxiliary recursions are
///   p <- a p - b dU/dn,   z <- a z - b (d2U/dn2 + dp/dn)
/// with a = exp(-sigma dt), b = 1 - a, sigma = sigma_max (d / width)^2 where d
/// counts cells into the layer (d = width on the outermost cell).
struct PmlProfiles {
  std::vector<double> a_z, b_z, sigma_z;
  std::vector<double> a_x, b_x, sigma_x;
  bool pml_top = false;
  std::size_t width = 0;

  // True when the cell lies in an absorbing layer of any active axis.
  bool in_halo(std::size_t iz, std::size_t ix) const;
};

PmlProfiles pml_profiles(const VelocityGrid& grid, const SolverConfig& cfg, Boundary boundary);

enum class HistoryPolicy { None, Full, Stride };

/// Wavefield snapshots U^k. `steps[i]` is the time index of `snapshots[i]`.
struct WavefieldHistory {
  HistoryPolicy policy = HistoryPolicy::None;
  std::size_t stride = 1;
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> snapshots;
};

struct ShotResult {
  ShotGather gather;
  WavefieldHistory history;
};

/// Explicit second-order time stepping of v^2-scaled acoustic wave equation
/// with convolutional PML auxiliaries on every absorbing axis. Exposes a single
/// forward step and its exact transpose so that callers can build gradients.
class Propagator {
 public:
  struct State {
    std::vector<double> u, u_prev;
    std::vector<double> pz, zz, px, zx;
  };

  struct AdjointState {
    std::vector<double> lam_next;  // adjoint of U^{k+1}, complete
    std::vector<double> lam_cur;   // adjoint of U^k, partial
    std::vector<double> pz, zz, px, zx;
  };

  Propagator(const VelocityGrid& grid, const SolverConfig& cfg, Boundary boundary);

  std::size_t cells() const noexcept { return n_; }
  const PmlProfiles& profiles() const noexcept { return pml_; }
  double dt() const noexcept { return dt_; }
  std::span<const double> squared_velocity() const noexcept { return c_; }

  State initial_state() const;
  AdjointState initial_adjoint() const;

  /// Advances U^k -> U^{k+1}. `rhs_out`, when non-empty, receives the bracketed
  /// right-hand side R^k (Laplacian + PML terms + source) so that
  /// U^{k+1} = 2U^k - U^{k-1} + dt^2 v^2 R^k.
  void step(State& s, std::size_t src_cell, double src_amp, std::span<double> rhs_out) const;

  /// Transpose of `step` for time index k. On entry `a.lam_next` holds dJ/dU^{k+1};
  /// on exit the state is shifted so that `a.lam_next` holds the (still partial)
  /// adjoint of U^k and the caller must add the data term for sample k to it.
  /// Accumulates dJ/d(v^2) into `grad_c`.
  void adjoint_step(AdjointState& a, std::span<const double> rhs, std::span<double> grad_c) const;

 private:
  std::size_t nz_, nx_, n_;
  double dz_, dx_, dt_;
  bool two_d_;
  bool free_surface_;
  std::vector<double> c_;
  PmlProfiles pml_;
  // Scratch reused by step/adjoint_step.
  mutable std::vector<double> t1_, t2_, t3_, t4_;
};

/// Forward-models one shot. Trace sample k is U^k at each receiver, U^0 = 0.
ShotResult simulate_shot(const VelocityGrid& grid, const Wavelet& wavelet,
                         const AcquisitionGeometry& geometry, std::size_t shot_index,
                         const SolverConfig& cfg, HistoryPolicy history = HistoryPolicy::None,
                         std::size_t history_stride = 1);

std::vector<ShotGather> simulate_all(const VelocityGrid& grid, const Wavelet& wavelet,
                                     const AcquisitionGeometry& geometry,
                                     const SolverConfig& cfg);

// Source amplitude series aligned to cfg.nt (zero-padded or truncated).
std::vector<double> source_series(const Wavelet& wavelet, const SolverConfig& cfg);

}  // namespace crfwi
