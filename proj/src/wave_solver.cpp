#include "crfwi/wave_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "crfwi/errors.hpp"

namespace crfwi {

namespace {

constexpr std::size_t kBlowupCheckEvery = 50;

double default_sigma_max(double v_max, std::size_t width, double h) {
  return 3.0 * v_max * std::log(1000.0) / (2.0 * static_cast<double>(width) * h);
}

// Fills sigma/a/b for one axis of length n. `low`/`high` select which ends
// carry an absorbing layer.
void axis_profile(std::size_t n, std::size_t width, bool low, bool high, double sigma_max,
                  double dt, std::vector<double>& sigma, std::vector<double>& a,
                  std::vector<double>& b) {
  sigma.assign(n, 0.0);
  a.assign(n, 1.0);
  b.assign(n, 0.0);
  if (width == 0) return;
  const double w = static_cast<double>(width);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    if (low && i < width) d = static_cast<double>(width - i);
    if (high && i + width >= n) d = std::max(d, static_cast<double>(i + width - (n - 1)));
    if (d <= 0.0) continue;
    const double r = d / w;
    sigma[i] = sigma_max * r * r;
    a[i] = std::exp(-sigma[i] * dt);
    b[i] = 1.0 - a[i];
  }
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

SolverConfig freeze_pml(SolverConfig cfg, const VelocityGrid& grid) {
  if (std::isnan(cfg.pml_reference_velocity)) cfg.pml_reference_velocity = grid.max_value();
  return cfg;
}

StabilityReport stability_check(const VelocityGrid& grid, const SolverConfig& cfg) {
  StabilityReport rep;
  rep.dt = cfg.dt;
  const double h = grid.dims() == 1 ? grid.dz : std::min(grid.dz, grid.dx);
  const double factor = 1.0 / std::sqrt(static_cast<double>(grid.dims()));
  rep.dt_limit = factor * h / grid.max_value();
  rep.ok = cfg.dt > 0.0 && cfg.dt <= rep.dt_limit;
  if (!rep.ok) {
    std::ostringstream os;
    os << "CFL violation: dt=" << cfg.dt << " s exceeds limit " << rep.dt_limit
       << " s (v_max=" << grid.max_value() << " m/s, h=" << h << " m)";
    rep.message = os.str();
  }
  return rep;
}

bool PmlProfiles::in_halo(std::size_t iz, std::size_t ix) const {
  if (b_z[iz] > 0.0) return true;
  return !b_x.empty() && b_x.size() > 1 && b_x[ix] > 0.0;
}

PmlProfiles pml_profiles(const VelocityGrid& grid, const SolverConfig& cfg, Boundary boundary) {
  const std::size_t w = cfg.pml_width;
  const bool two_d = grid.dims() == 2;
  if (w > 0) {
    const std::size_t limit = two_d ? std::min(grid.nz, grid.nx) : grid.nz;
    if (2 * w >= limit)
      throw std::invalid_argument("pml_width must be smaller than half the grid extent");
  }
  PmlProfiles p;
  p.width = w;
  p.pml_top = boundary == Boundary::PmlAllSides;
  const double v_max =
      std::isnan(cfg.pml_reference_velocity) ? grid.max_value() : cfg.pml_reference_velocity;
  const double smax_z = std::isnan(cfg.pml_max_damping)
                            ? (w > 0 ? default_sigma_max(v_max, w, grid.dz) : 0.0)
                            : cfg.pml_max_damping;
  axis_profile(grid.nz, w, p.pml_top, true, smax_z, cfg.dt, p.sigma_z, p.a_z, p.b_z);
  if (two_d) {
    const double smax_x = std::isnan(cfg.pml_max_damping)
                              ? (w > 0 ? default_sigma_max(v_max, w, grid.dx) : 0.0)
                              : cfg.pml_max_damping;
    axis_profile(grid.nx, w, true, true, smax_x, cfg.dt, p.sigma_x, p.a_x, p.b_x);
  } else {
    p.sigma_x.assign(1, 0.0);
    p.a_x.assign(1, 1.0);
    p.b_x.assign(1, 0.0);
  }
  return p;
}

Propagator::Propagator(const VelocityGrid& grid, const SolverConfig& cfg, Boundary boundary)
    : nz_(grid.nz),
      nx_(grid.nx),
      n_(grid.size()),
      dz_(grid.dz),
      dx_(grid.dx),
      dt_(cfg.dt),
      two_d_(grid.dims() == 2),
      free_surface_(boundary == Boundary::FreeSurfaceTop),
      c_(grid.size()),
      pml_(pml_profiles(grid, cfg, boundary)),
      t1_(grid.size()),
      t2_(grid.size()),
      t3_(grid.size()),
      t4_(grid.size()) {
  for (std::size_t i = 0; i < n_; ++i) c_[i] = grid.values[i] * grid.values[i];
}

Propagator::State Propagator::initial_state() const {
  State s;
  s.u.assign(n_, 0.0);
  s.u_prev.assign(n_, 0.0);
  s.pz.assign(n_, 0.0);
  s.zz.assign(n_, 0.0);
  if (two_d_) {
    s.px.assign(n_, 0.0);
    s.zx.assign(n_, 0.0);
  }
  return s;
}

Propagator::AdjointState Propagator::initial_adjoint() const {
  AdjointState a;
  a.lam_next.assign(n_, 0.0);
  a.lam_cur.assign(n_, 0.0);
  a.pz.assign(n_, 0.0);
  a.zz.assign(n_, 0.0);
  if (two_d_) {
    a.px.assign(n_, 0.0);
    a.zx.assign(n_, 0.0);
  }
  return a;
}

void Propagator::step(State& s, std::size_t src_cell, double src_amp,
                      std::span<double> rhs_out) const {
  std::vector<double>& r = t1_;
  std::vector<double>& lap = t2_;
  std::vector<double>& q = t3_;
  const bool pml = pml_.width > 0;
  const std::size_t nz = nz_, nx = nx_;
  const auto& u = s.u;

  // z axis (stride nx)
  {
    const double inv2h = 1.0 / (2.0 * dz_);
    const double invh2 = 1.0 / (dz_ * dz_);
    for (std::size_t iz = 0; iz < nz; ++iz) {
      const double* up = iz > 0 ? &u[(iz - 1) * nx] : nullptr;
      const double* dn = iz + 1 < nz ? &u[(iz + 1) * nx] : nullptr;
      const double a = pml_.a_z[iz], b = pml_.b_z[iz];
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const std::size_t i = iz * nx + ix;
        const double um = up ? up[ix] : 0.0;
        const double upl = dn ? dn[ix] : 0.0;
        lap[i] = (upl - 2.0 * u[i] + um) * invh2;
        if (pml) s.pz[i] = a * s.pz[i] - b * (upl - um) * inv2h;
      }
    }
    if (pml) {
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double pm = iz > 0 ? s.pz[i - nx] : 0.0;
          const double pp = iz + 1 < nz ? s.pz[i + nx] : 0.0;
          q[i] = (pp - pm) * inv2h;
        }
      for (std::size_t iz = 0; iz < nz; ++iz) {
        const double a = pml_.a_z[iz], b = pml_.b_z[iz];
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          s.zz[i] = a * s.zz[i] - b * (lap[i] + q[i]);
          r[i] = lap[i] + q[i] + s.zz[i];
        }
      }
    } else {
      for (std::size_t i = 0; i < n_; ++i) r[i] = lap[i];
    }
  }

  // x axis (stride 1)
  if (two_d_) {
    const double inv2h = 1.0 / (2.0 * dx_);
    const double invh2 = 1.0 / (dx_ * dx_);
    for (std::size_t iz = 0; iz < nz; ++iz) {
      const double* row = &u[iz * nx];
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const std::size_t i = iz * nx + ix;
        const double um = ix > 0 ? row[ix - 1] : 0.0;
        const double upl = ix + 1 < nx ? row[ix + 1] : 0.0;
        lap[i] = (upl - 2.0 * row[ix] + um) * invh2;
        if (pml) s.px[i] = pml_.a_x[ix] * s.px[i] - pml_.b_x[ix] * (upl - um) * inv2h;
      }
    }
    if (pml) {
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double pm = ix > 0 ? s.px[i - 1] : 0.0;
          const double pp = ix + 1 < nx ? s.px[i + 1] : 0.0;
          q[i] = (pp - pm) * inv2h;
        }
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          s.zx[i] = pml_.a_x[ix] * s.zx[i] - pml_.b_x[ix] * (lap[i] + q[i]);
          r[i] += lap[i] + q[i] + s.zx[i];
        }
    } else {
      for (std::size_t i = 0; i < n_; ++i) r[i] += lap[i];
    }
  }

  r[src_cell] += src_amp;

  const double dt2 = dt_ * dt_;
  for (std::size_t i = 0; i < n_; ++i) {
    s.u_prev[i] = 2.0 * u[i] - s.u_prev[i] + dt2 * c_[i] * r[i];
  }
  if (free_surface_)
    for (std::size_t ix = 0; ix < nx; ++ix) s.u_prev[ix] = 0.0;
  std::swap(s.u, s.u_prev);

  if (!rhs_out.empty()) std::copy(r.begin(), r.end(), rhs_out.begin());
}

void Propagator::adjoint_step(AdjointState& a, std::span<const double> rhs,
                              std::span<double> grad_c) const {
  const std::size_t nz = nz_, nx = nx_;
  const double dt2 = dt_ * dt_;
  const bool pml = pml_.width > 0;
  std::vector<double>& g = a.lam_next;
  std::vector<double>& rbar = t1_;
  std::vector<double>& lq = t2_;
  std::vector<double>& pbar = t3_;
  std::vector<double>& d1 = t4_;

  if (free_surface_)
    for (std::size_t ix = 0; ix < nx; ++ix) g[ix] = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    grad_c[i] += dt2 * g[i] * rhs[i];
    rbar[i] = dt2 * c_[i] * g[i];
    a.lam_cur[i] += 2.0 * g[i];
  }

  auto& lam = a.lam_cur;

  // z axis
  {
    const double inv2h = 1.0 / (2.0 * dz_);
    const double invh2 = 1.0 / (dz_ * dz_);
    if (pml) {
      for (std::size_t iz = 0; iz < nz; ++iz) {
        const double ac = pml_.a_z[iz], bc = pml_.b_z[iz];
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double zbar = a.zz[i] + rbar[i];
          lq[i] = rbar[i] - bc * zbar;
          a.zz[i] = ac * zbar;
        }
      }
      for (std::size_t iz = 0; iz < nz; ++iz) {
        const double ac = pml_.a_z[iz], bc = pml_.b_z[iz];
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double qm = iz > 0 ? lq[i - nx] : 0.0;
          const double qp = iz + 1 < nz ? lq[i + nx] : 0.0;
          pbar[i] = a.pz[i] - (qp - qm) * inv2h;
          a.pz[i] = ac * pbar[i];
          d1[i] = -bc * pbar[i];
        }
      }
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double lm = iz > 0 ? lq[i - nx] : 0.0;
          const double lp = iz + 1 < nz ? lq[i + nx] : 0.0;
          const double dm = iz > 0 ? d1[i - nx] : 0.0;
          const double dp = iz + 1 < nz ? d1[i + nx] : 0.0;
          lam[i] += (lp - 2.0 * lq[i] + lm) * invh2 - (dp - dm) * inv2h;
        }
    } else {
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double lm = iz > 0 ? rbar[i - nx] : 0.0;
          const double lp = iz + 1 < nz ? rbar[i + nx] : 0.0;
          lam[i] += (lp - 2.0 * rbar[i] + lm) * invh2;
        }
    }
  }

  // x axis
  if (two_d_) {
    const double inv2h = 1.0 / (2.0 * dx_);
    const double invh2 = 1.0 / (dx_ * dx_);
    if (pml) {
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double zbar = a.zx[i] + rbar[i];
          lq[i] = rbar[i] - pml_.b_x[ix] * zbar;
          a.zx[i] = pml_.a_x[ix] * zbar;
        }
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double qm = ix > 0 ? lq[i - 1] : 0.0;
          const double qp = ix + 1 < nx ? lq[i + 1] : 0.0;
          pbar[i] = a.px[i] - (qp - qm) * inv2h;
          a.px[i] = pml_.a_x[ix] * pbar[i];
          d1[i] = -pml_.b_x[ix] * pbar[i];
        }
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double lm = ix > 0 ? lq[i - 1] : 0.0;
          const double lp = ix + 1 < nx ? lq[i + 1] : 0.0;
          const double dm = ix > 0 ? d1[i - 1] : 0.0;
          const double dp = ix + 1 < nx ? d1[i + 1] : 0.0;
          lam[i] += (lp - 2.0 * lq[i] + lm) * invh2 - (dp - dm) * inv2h;
        }
    } else {
      for (std::size_t iz = 0; iz < nz; ++iz)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t i = iz * nx + ix;
          const double lm = ix > 0 ? rbar[i - 1] : 0.0;
          const double lp = ix + 1 < nx ? rbar[i + 1] : 0.0;
          lam[i] += (lp - 2.0 * rbar[i] + lm) * invh2;
        }
    }
  }

  // Shift: U^{k-1} receives -g from the "- U^{k-1}" term.
  for (std::size_t i = 0; i < n_; ++i) g[i] = -g[i];
  std::swap(a.lam_next, a.lam_cur);
}

std::vector<double> source_series(const Wavelet& wavelet, const SolverConfig& cfg) {
  std::vector<double> s(cfg.nt, 0.0);
  const std::size_t n = std::min(cfg.nt, wavelet.nt());
  std::copy_n(wavelet.samples.begin(), n, s.begin());
  return s;
}

ShotResult simulate_shot(const VelocityGrid& grid, const Wavelet& wavelet,
                         const AcquisitionGeometry& geometry, std::size_t shot_index,
                         const SolverConfig& cfg, HistoryPolicy history,
                         std::size_t history_stride) {
  grid.validate();
  wavelet.validate();
  geometry.validate(grid);
  if (cfg.nt < 1) throw std::invalid_argument("solver nt must be >= 1");
  if (std::abs(wavelet.dt - cfg.dt) > 1e-12 * cfg.dt)
    throw std::invalid_argument("wavelet dt differs from solver dt");
  if (shot_index >= geometry.sources.size())
    throw std::invalid_argument("shot index out of range");
  const auto rep = stability_check(grid, cfg);
  if (!rep.ok) throw std::invalid_argument(rep.message);
  if (history == HistoryPolicy::Stride && history_stride == 0)
    throw std::invalid_argument("history stride must be >= 1");

  const Propagator prop(grid, cfg, geometry.boundary);
  const auto src = source_series(wavelet, cfg);
  const auto& sc = geometry.sources[shot_index];
  const std::size_t src_cell = grid.index(sc.iz, sc.ix);
  std::vector<std::size_t> rec_cells;
  for (const auto& r : geometry.receivers) rec_cells.push_back(grid.index(r.iz, r.ix));

  ShotResult out;
  out.gather = ShotGather::zeros(rec_cells.size(), cfg.nt, cfg.dt);
  out.history.policy = history;
  out.history.stride = history == HistoryPolicy::Full ? 1 : history_stride;

  auto state = prop.initial_state();
  for (std::size_t k = 0; k < cfg.nt; ++k) {
    for (std::size_t r = 0; r < rec_cells.size(); ++r) out.gather.at(r, k) = state.u[rec_cells[r]];
    if (history != HistoryPolicy::None && k % out.history.stride == 0) {
      out.history.steps.push_back(k);
      out.history.snapshots.push_back(state.u);
    }
    if (k + 1 == cfg.nt) break;
    prop.step(state, src_cell, src[k], {});
    if ((k + 1) % kBlowupCheckEvery == 0 || k + 2 == cfg.nt) {
      if (!all_finite(state.u)) {
        throw NumericBlowup("wavefield became non-finite at time step " + std::to_string(k + 1),
                            k + 1);
      }
    }
  }
  return out;
}

std::vector<ShotGather> simulate_all(const VelocityGrid& grid, const Wavelet& wavelet,
                                     const AcquisitionGeometry& geometry,
                                     const SolverConfig& cfg) {
  std::vector<ShotGather> out;
  out.reserve(geometry.sources.size());
  for (std::size_t s = 0; s < geometry.sources.size(); ++s)
    out.push_back(simulate_shot(grid, wavelet, geometry, s, cfg).gather);
  return out;
}

}  // namespace crfwi
