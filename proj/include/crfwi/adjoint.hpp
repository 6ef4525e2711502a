#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "crfwi/model_core.hpp"
#include "crfwi/wave_solver.hpp"

namespace crfwi {

/// Grid-shaped field of dJ/d(velocity) values (s/m units folded into J).
struct ModelGradient {
  std::size_t nz = 0;
  std::size_t nx = 0;
  std::vector<double> values;

  static ModelGradient zeros(std::size_t nz, std::size_t nx) {
    return {nz, nx, std::vector<double>(nz * nx, 0.0)};
  }
  static ModelGradient zeros_like(const VelocityGrid& g) { return zeros(g.nz, g.nx); }
  ModelGradient& operator+=(const ModelGradient& other);
};

struct MisfitReport {
  double value = 0.0;                 // 1/2 sum (syn - obs)^2 dt
  std::vector<ShotGather> residual;   // syn - obs, per shot
};

MisfitReport l2_misfit(std::span<const ShotGather> syn, std::span<const ShotGather> obs);

struct GradientOptions {
  bool mask_pml = true;
};

/// Forward pass for one shot with checkpointed state, reusable for any number
/// of reverse passes. `backpropagate` returns d<adj, traces>/d(velocity) for an
/// arbitrary adjoint source adj[r, k] (the derivative of the objective with
/// respect to each recorded sample), without PML masking.
class ShotAdjoint {
 public:
  ShotAdjoint(const VelocityGrid& grid, const Wavelet& wavelet,
              const AcquisitionGeometry& geometry, std::size_t shot_index,
              const SolverConfig& cfg);

  const ShotGather& gather() const noexcept { return gather_; }
  std::vector<double> backpropagate(const ShotGather& data_adjoint) const;
  const Propagator& propagator() const noexcept { return prop_; }

 private:
  VelocityGrid grid_;
  SolverConfig cfg_;
  Propagator prop_;
  std::vector<double> src_;
  std::size_t src_cell_;
  std::vector<std::size_t> rec_cells_;
  std::vector<Propagator::State> checkpoints_;  // state before step k*stride
  std::size_t stride_;
  ShotGather gather_;
};

struct ShotGradient {
  double misfit = 0.0;
  ShotGather residual;
  ModelGradient gradient;
};

ShotGradient shot_gradient(const VelocityGrid& grid, const Wavelet& wavelet,
                           const AcquisitionGeometry& geometry, std::size_t shot_index,
                           const SolverConfig& cfg, const ShotGather& observed,
                           const GradientOptions& opts = {});

struct GradientResult {
  MisfitReport misfit;
  ModelGradient gradient;
};

/// Misfit and exact discrete gradient summed over shots (in shot order).
/// `shots` restricts the computation to a subset; observed[i] pairs with shots[i].
GradientResult model_gradient(const VelocityGrid& grid, const Wavelet& wavelet,
                              const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                              std::span<const ShotGather> observed,
                              const GradientOptions& opts = {},
                              std::span<const std::size_t> shots = {});

/// Misfit only (forward passes, no adjoint).
double fwi_objective(const VelocityGrid& grid, const Wavelet& wavelet,
                     const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                     std::span<const ShotGather> observed);

inline constexpr std::size_t kFdOracleMaxCells = 5000;

/// Central differences (J(m + eps e_i) - J(m - eps e_i)) / (2 eps) per cell.
ModelGradient fd_gradient_oracle(const std::function<double(const VelocityGrid&)>& objective,
                                 const VelocityGrid& grid, double epsilon);

ModelGradient fd_gradient_oracle(const VelocityGrid& grid, const Wavelet& wavelet,
                                 const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                                 std::span<const ShotGather> observed, double epsilon);

struct TvResult {
  double value = 0.0;
  ModelGradient gradient;
};

inline constexpr double kTvDefaultAlpha = 2e-9;
inline constexpr double kTvSmoothingMps = 1e-3;  // 1e-6 km/s

/// Smoothed isotropic total variation on forward differences (m/s):
///   sum_i sqrt(ax^2 dx_i^2 + az^2 dz_i^2 + (amax eps)^2) - amax eps
TvResult tv_term(const VelocityGrid& grid, double alpha_x = kTvDefaultAlpha,
                 double alpha_z = kTvDefaultAlpha, double smoothing = kTvSmoothingMps);

void apply_pml_mask(ModelGradient& g, const PmlProfiles& pml);

}  // namespace crfwi
