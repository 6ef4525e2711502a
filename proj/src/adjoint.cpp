#include "crfwi/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "crfwi/errors.hpp"

namespace crfwi {

ModelGradient& ModelGradient::operator+=(const ModelGradient& other) {
  if (nz != other.nz || nx != other.nx)
    throw std::invalid_argument("gradient shapes differ");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
  return *this;
}

MisfitReport l2_misfit(std::span<const ShotGather> syn, std::span<const ShotGather> obs) {
  if (syn.size() != obs.size()) throw std::invalid_argument("l2_misfit: shot count mismatch");
  MisfitReport rep;
  rep.residual.reserve(syn.size());
  for (std::size_t s = 0; s < syn.size(); ++s) {
    if (!syn[s].same_shape(obs[s]))
      throw std::invalid_argument("l2_misfit: gather shape mismatch in shot " + std::to_string(s));
    ShotGather res = syn[s];
    double sum = 0.0;
    for (std::size_t i = 0; i < res.data.size(); ++i) {
      res.data[i] -= obs[s].data[i];
      sum += res.data[i] * res.data[i];
    }
    rep.value += 0.5 * sum * syn[s].dt;
    rep.residual.push_back(std::move(res));
  }
  return rep;
}

ShotAdjoint::ShotAdjoint(const VelocityGrid& grid, const Wavelet& wavelet,
                         const AcquisitionGeometry& geometry, std::size_t shot_index,
                         const SolverConfig& cfg)
    : grid_(grid),
      cfg_(cfg),
      prop_((grid.validate(), geometry.validate(grid), grid), cfg, geometry.boundary),
      src_(source_series(wavelet, cfg)),
      stride_(std::max<std::size_t>(1, cfg.checkpoint_stride)) {
  const auto rep = stability_check(grid, cfg);
  if (!rep.ok) throw std::invalid_argument(rep.message);
  wavelet.validate();
  if (std::abs(wavelet.dt - cfg.dt) > 1e-12 * cfg.dt)
    throw std::invalid_argument("wavelet dt differs from solver dt");
  if (shot_index >= geometry.sources.size())
    throw std::invalid_argument("shot index out of range");
  const auto& sc = geometry.sources[shot_index];
  src_cell_ = grid.index(sc.iz, sc.ix);
  for (const auto& r : geometry.receivers) rec_cells_.push_back(grid.index(r.iz, r.ix));

  gather_ = ShotGather::zeros(rec_cells_.size(), cfg.nt, cfg.dt);
  auto state = prop_.initial_state();
  for (std::size_t k = 0; k < cfg.nt; ++k) {
    for (std::size_t r = 0; r < rec_cells_.size(); ++r) gather_.at(r, k) = state.u[rec_cells_[r]];
    if (k + 1 == cfg.nt) break;
    if (k % stride_ == 0) checkpoints_.push_back(state);
    prop_.step(state, src_cell_, src_[k], {});
    if ((k + 1) % 50 == 0 || k + 2 == cfg.nt) {
      for (double v : state.u)
        if (!std::isfinite(v))
          throw NumericBlowup("forward wavefield non-finite at time step " + std::to_string(k + 1),
                              k + 1);
    }
  }
}

std::vector<double> ShotAdjoint::backpropagate(const ShotGather& adj) const {
  if (adj.n_receivers != rec_cells_.size() || adj.nt != cfg_.nt)
    throw std::invalid_argument("adjoint source shape does not match the shot");
  const std::size_t n = prop_.cells();
  const std::size_t nt = cfg_.nt;
  std::vector<double> grad_c(n, 0.0);
  if (nt < 2) return grad_c;

  // Reverse steps after the last non-zero adjoint sample only carry zeros.
  std::size_t t_last = nt;
  for (std::size_t k = nt; k-- > 0 && t_last == nt;)
    for (std::size_t r = 0; r < rec_cells_.size(); ++r)
      if (adj.at(r, k) != 0.0) {
        t_last = k;
        break;
      }
  if (t_last == nt) return grad_c;

  auto a = prop_.initial_adjoint();
  for (std::size_t r = 0; r < rec_cells_.size(); ++r) a.lam_next[rec_cells_[r]] += adj.at(r, t_last);

  std::vector<double> rhs;
  for (std::size_t seg = checkpoints_.size(); seg-- > 0;) {
    const std::size_t k0 = seg * stride_;
    if (k0 >= t_last) continue;
    const std::size_t k1 = std::min(k0 + stride_, t_last);
    rhs.resize((k1 - k0) * n);
    auto state = checkpoints_[seg];
    for (std::size_t k = k0; k < k1; ++k)
      prop_.step(state, src_cell_, src_[k], std::span(rhs.data() + (k - k0) * n, n));
    for (std::size_t k = k1; k-- > k0;) {
      prop_.adjoint_step(a, std::span<const double>(rhs.data() + (k - k0) * n, n), grad_c);
      for (std::size_t r = 0; r < rec_cells_.size(); ++r) a.lam_next[rec_cells_[r]] += adj.at(r, k);
    }
  }
  for (double v : a.lam_next)
    if (!std::isfinite(v)) throw NumericBlowup("adjoint wavefield became non-finite", 0);

  // dJ/dv = 2 v dJ/dc
  for (std::size_t i = 0; i < n; ++i) grad_c[i] *= 2.0 * grid_.values[i];
  return grad_c;
}

void apply_pml_mask(ModelGradient& g, const PmlProfiles& pml) {
  for (std::size_t iz = 0; iz < g.nz; ++iz)
    for (std::size_t ix = 0; ix < g.nx; ++ix)
      if (pml.in_halo(iz, ix)) g.values[iz * g.nx + ix] = 0.0;
}

ShotGradient shot_gradient(const VelocityGrid& grid, const Wavelet& wavelet,
                           const AcquisitionGeometry& geometry, std::size_t shot_index,
                           const SolverConfig& cfg, const ShotGather& observed,
                           const GradientOptions& opts) {
  try {
    ShotAdjoint fwd(grid, wavelet, geometry, shot_index, cfg);
    const ShotGather& syn = fwd.gather();
    if (!syn.same_shape(observed))
      throw std::invalid_argument("observed gather shape mismatch for shot " +
                                  std::to_string(shot_index));
    ShotGradient out;
    out.residual = syn;
    ShotGather adj = syn;
    double sum = 0.0;
    for (std::size_t i = 0; i < syn.data.size(); ++i) {
      const double r = syn.data[i] - observed.data[i];
      out.residual.data[i] = r;
      adj.data[i] = r * syn.dt;
      sum += r * r;
    }
    out.misfit = 0.5 * sum * syn.dt;
    out.gradient = ModelGradient{grid.nz, grid.nx, fwd.backpropagate(adj)};
    if (opts.mask_pml) apply_pml_mask(out.gradient, fwd.propagator().profiles());
    return out;
  } catch (const NumericBlowup& e) {
    throw NumericBlowup("shot " + std::to_string(shot_index) + ": " + e.what(), e.step());
  }
}

GradientResult model_gradient(const VelocityGrid& grid, const Wavelet& wavelet,
                              const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                              std::span<const ShotGather> observed, const GradientOptions& opts,
                              std::span<const std::size_t> shots) {
  std::vector<std::size_t> all;
  if (shots.empty()) {
    for (std::size_t s = 0; s < geometry.sources.size(); ++s) all.push_back(s);
    shots = all;
  }
  if (observed.size() != shots.size())
    throw std::invalid_argument("model_gradient: observed gathers do not match shot count");
  GradientResult out;
  out.gradient = ModelGradient::zeros_like(grid);
  for (std::size_t i = 0; i < shots.size(); ++i) {
    auto sg = shot_gradient(grid, wavelet, geometry, shots[i], cfg, observed[i], opts);
    out.misfit.value += sg.misfit;
    out.misfit.residual.push_back(std::move(sg.residual));
    out.gradient += sg.gradient;
  }
  return out;
}

double fwi_objective(const VelocityGrid& grid, const Wavelet& wavelet,
                     const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                     std::span<const ShotGather> observed) {
  const auto syn = simulate_all(grid, wavelet, geometry, cfg);
  return l2_misfit(syn, observed).value;
}

ModelGradient fd_gradient_oracle(const std::function<double(const VelocityGrid&)>& objective,
                                 const VelocityGrid& grid, double epsilon) {
  if (grid.size() > kFdOracleMaxCells)
    throw ResourceGuard("finite-difference oracle (cells)",
                        static_cast<double>(grid.size()), static_cast<double>(kFdOracleMaxCells));
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  ModelGradient g = ModelGradient::zeros_like(grid);
  VelocityGrid work = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = grid.values[i];
    work.values[i] = v + epsilon;
    const double jp = objective(work);
    work.values[i] = v - epsilon;
    const double jm = objective(work);
    work.values[i] = v;
    g.values[i] = (jp - jm) / (2.0 * epsilon);
  }
  return g;
}

ModelGradient fd_gradient_oracle(const VelocityGrid& grid, const Wavelet& wavelet,
                                 const AcquisitionGeometry& geometry, const SolverConfig& cfg,
                                 std::span<const ShotGather> observed, double epsilon) {
  return fd_gradient_oracle(
      [&](const VelocityGrid& m) { return fwi_objective(m, wavelet, geometry, cfg, observed); },
      grid, epsilon);
}

TvResult tv_term(const VelocityGrid& grid, double alpha_x, double alpha_z, double smoothing) {
  if (alpha_x < 0.0 || alpha_z < 0.0) throw std::invalid_argument("TV weights must be >= 0");
  TvResult out;
  out.gradient = ModelGradient::zeros_like(grid);
  const double amax = std::max(alpha_x, alpha_z);
  if (amax == 0.0) return out;
  const double eps = amax * smoothing;
  const std::size_t nz = grid.nz, nx = grid.nx;
  const auto& m = grid.values;
  auto& g = out.gradient.values;
  for (std::size_t iz = 0; iz < nz; ++iz)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t i = iz * nx + ix;
      const double dz = iz + 1 < nz ? m[i + nx] - m[i] : 0.0;
      const double dx = ix + 1 < nx ? m[i + 1] - m[i] : 0.0;
      const double wz = alpha_z * dz, wx = alpha_x * dx;
      const double s = std::sqrt(wz * wz + wx * wx + eps * eps);
      out.value += s - eps;
      // d s / d dz = az^2 dz / s
      const double gz = alpha_z * wz / s;
      const double gx = alpha_x * wx / s;
      if (iz + 1 < nz) {
        g[i + nx] += gz;
        g[i] -= gz;
      }
      if (ix + 1 < nx) {
        g[i + 1] += gx;
        g[i] -= gx;
      }
    }
  return out;
}

}  // namespace crfwi
