#include "crfwi/ntk_lab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

#include "crfwi/errors.hpp"
#include "crfwi/models.hpp"

namespace crfwi {

SensitivityJacobian sensitivity_jacobian(const VelocityGrid& grid, const Wavelet& wavelet,
                                         const AcquisitionGeometry& geometry,
                                         const SolverConfig& cfg, const JacobianSampling& sampling,
                                         std::span<const std::size_t> cells, double guard) {
  if (sampling.receiver_stride == 0 || sampling.time_stride == 0)
    throw std::invalid_argument("sampling strides must be positive");
  grid.validate();
  geometry.validate(grid);
  SensitivityJacobian out;
  if (cells.empty()) {
    out.cells.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out.cells[i] = i;
  } else {
    out.cells.assign(cells.begin(), cells.end());
    for (auto c : out.cells)
      if (c >= grid.size()) throw std::invalid_argument("jacobian cell outside the grid");
  }
  for (std::size_t s = 0; s < geometry.sources.size(); ++s)
    for (std::size_t r = 0; r < geometry.receivers.size(); r += sampling.receiver_stride)
      for (std::size_t t = sampling.time_stride; t < cfg.nt; t += sampling.time_stride)
        out.rows.push_back({s, r, t});
  const double entries = double(out.rows.size()) * double(out.cells.size());
  if (entries > guard) throw ResourceGuard("sensitivity jacobian (entries)", entries, guard);

  out.j.resize(static_cast<Eigen::Index>(out.rows.size()),
               static_cast<Eigen::Index>(out.cells.size()));
  std::size_t row = 0;
  for (std::size_t s = 0; s < geometry.sources.size(); ++s) {
    ShotAdjoint fwd(grid, wavelet, geometry, s, cfg);
    ShotGather adj = ShotGather::zeros(geometry.receivers.size(), cfg.nt, cfg.dt);
    for (; row < out.rows.size() && out.rows[row].shot == s; ++row) {
      const auto& d = out.rows[row];
      adj.at(d.receiver, d.time) = 1.0;
      const auto g = fwd.backpropagate(adj);
      adj.at(d.receiver, d.time) = 0.0;
      for (std::size_t c = 0; c < out.cells.size(); ++c)
        out.j(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = g[out.cells[c]];
    }
  }
  return out;
}

std::vector<std::size_t> interior_cells(const VelocityGrid& grid, const SolverConfig& cfg,
                                        Boundary boundary) {
  const auto pml = pml_profiles(grid, cfg, boundary);
  std::vector<std::size_t> cells;
  for (std::size_t iz = 0; iz < grid.nz; ++iz)
    for (std::size_t ix = 0; ix < grid.nx; ++ix)
      if (!pml.in_halo(iz, ix)) cells.push_back(grid.index(iz, ix));
  return cells;
}

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& jk, const Eigen::MatrixXd& j) {
  const Eigen::MatrixXd t = jk * j.transpose();
  return symmetrize(t);
}

}  // namespace

KernelMatrix wave_kernel(const Eigen::MatrixXd& j) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(j.cols(), j.cols());
  const Eigen::MatrixXd jk = j * id;
  return {sandwich(jk, j), "wave_kernel"};
}

KernelMatrix wave_ntk(const Eigen::MatrixXd& j, const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols() || k.cols() != j.cols())
    throw std::invalid_argument("kernel must be square with one row per jacobian column");
  const Eigen::MatrixXd jk = j * k;
  return {sandwich(jk, j), "wave_ntk"};
}

SpectrumReport eigen_spectrum(const Eigen::MatrixXd& m, Normalize normalize, std::string label) {
  if (m.rows() != m.cols()) throw std::invalid_argument("eigen_spectrum needs a square matrix");
  if (static_cast<std::size_t>(m.rows()) > kMaxEigenDim)
    throw ResourceGuard("eigen decomposition (dimension)", double(m.rows()), double(kMaxEigenDim));
  SpectrumReport rep;
  rep.label = std::move(label);
  rep.normalization = normalize;
  if (m.rows() == 0) return rep;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigen decomposition failed");
  const auto& ev = es.eigenvalues();
  rep.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(), std::greater<>());
  if (normalize == Normalize::LambdaMaxToOne) {
    const double top = rep.eigenvalues.front();
    if (!(top > 0.0)) throw std::invalid_argument("cannot normalize: largest eigenvalue <= 0");
    rep.scale = 1.0 / top;
    for (auto& v : rep.eigenvalues) v *= rep.scale;
  }
  return rep;
}

OrderingReport compare_spectra(std::span<const double> upper, std::span<const double> lower,
                               double rel_tol) {
  if (upper.size() != lower.size()) throw std::invalid_argument("spectra differ in length");
  OrderingReport rep;
  rep.upper.assign(upper.begin(), upper.end());
  rep.lower.assign(lower.begin(), lower.end());
  if (upper.empty()) return rep;
  const double ref = std::max(std::abs(upper[0]), std::abs(lower[0]));
  const double tol = rel_tol * ref;
  for (std::size_t i = 0; i < upper.size(); ++i) {
    const double excess = lower[i] - upper[i];
    if (ref > 0.0) rep.worst_excess = std::max(rep.worst_excess, excess / ref);
    if (excess > tol) {
      if (rep.violations == 0) rep.first_violation = i;
      ++rep.violations;
    }
  }
  rep.ok = rep.violations == 0;
  return rep;
}

OrderingReport spectral_comparison_oracle(const Eigen::MatrixXd& j, const Eigen::MatrixXd& k2,
                                          const Eigen::MatrixXd& bump, double rel_tol) {
  if (bump.rows() != k2.rows() || bump.cols() != k2.cols())
    throw std::invalid_argument("bump and K2 differ in shape");
  const Eigen::MatrixXd k1 = k2 + bump;
  const auto hi = eigen_spectrum(wave_ntk(j, k1).m);
  const auto lo = eigen_spectrum(wave_ntk(j, k2).m);
  return compare_spectra(hi.eigenvalues, lo.eigenvalues, rel_tol);
}

OrderingReport identity_dominance_check(const Eigen::MatrixXd& j, const Eigen::MatrixXd& k,
                                        double rel_tol) {
  const auto ks = eigen_spectrum(k);
  if (ks.eigenvalues.empty() || !(ks.eigenvalues.front() > 0.0))
    throw std::invalid_argument("kernel has no positive eigenvalue");
  const Eigen::MatrixXd kn = k / ks.eigenvalues.front();
  const auto hi = eigen_spectrum(wave_kernel(j).m);
  const auto lo = eigen_spectrum(wave_ntk(j, kn).m);
  return compare_spectra(hi.eigenvalues, lo.eigenvalues, rel_tol);
}

std::vector<std::uint8_t> encode_kernel_matrix(const Eigen::MatrixXd& m) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * static_cast<std::size_t>(m.size()));
  for (char c : {'K', 'M', 'A', 'T'}) out.push_back(static_cast<std::uint8_t>(c));
  auto put32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  put32(static_cast<std::uint32_t>(m.rows()));
  put32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      put32(std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
  return out;
}

Eigen::MatrixXd decode_kernel_matrix(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || bytes[0] != 'K' || bytes[1] != 'M' || bytes[2] != 'A' || bytes[3] != 'T')
    throw FormatError("not a KMAT file");
  auto get32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(bytes[off + b]) << (8 * b);
    return v;
  };
  const std::size_t rows = get32(4), cols = get32(8);
  if (bytes.size() != 12 + 4 * rows * cols) throw FormatError("KMAT payload size mismatch");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const float v = std::bit_cast<float>(get32(12 + 4 * (r * cols + c)));
      if (!std::isfinite(v)) throw FormatError("KMAT holds a non-finite value");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  return m;
}

void save_kernel_matrix(const Eigen::MatrixXd& m, const std::string& path) {
  write_file_atomic(path, encode_kernel_matrix(m));
}

void dump_counterexample(const std::string& prefix, const Eigen::MatrixXd& j,
                         const Eigen::MatrixXd& k2, const Eigen::MatrixXd& bump,
                         const OrderingReport& report) {
  save_kernel_matrix(j, prefix + ".j.kmat");
  save_kernel_matrix(k2, prefix + ".k2.kmat");
  save_kernel_matrix(bump, prefix + ".bump.kmat");
  std::ostringstream os;
  os.precision(17);
  os << "violations " << report.violations << "\nfirst_index " << report.first_violation
     << "\nworst_excess " << report.worst_excess << '\n';
  if (report.first_violation < report.upper.size())
    os << "upper " << report.upper[report.first_violation] << "\nlower "
       << report.lower[report.first_violation] << '\n';
  write_text_atomic(prefix + ".txt", os.str());
}

SandwichReport shared_head_sandwich(const HybridIgRepr& repr, const Eigen::MatrixXd& j,
                                    std::span<const std::size_t> cells) {
  const double alpha = repr.alpha();
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("sandwich construction needs 0 < alpha < 1");
  const Eigen::MatrixXd g = repr.param_jacobian(cells);
  const auto n = static_cast<Eigen::Index>(cells.size());
  SandwichReport rep;
  rep.k_mlp = Eigen::MatrixXd::Zero(n, n);
  rep.k_inr_enc = Eigen::MatrixXd::Zero(n, n);
  rep.k_grid_enc = Eigen::MatrixXd::Zero(n, n);
  for (const auto& seg : repr.segments()) {
    const auto block = g.middleCols(static_cast<Eigen::Index>(seg.offset),
                                    static_cast<Eigen::Index>(seg.length));
    const Eigen::MatrixXd kk = block * block.transpose();
    if (seg.name.rfind("ig.head", 0) == 0) {
      rep.k_mlp += kk;
    } else if (seg.name.rfind("ig.inr", 0) == 0) {
      rep.k_inr_enc += kk / (1.0 - alpha);
    } else {
      rep.k_grid_enc += kk / alpha;
    }
  }
  rep.k_inr = rep.k_mlp + rep.k_inr_enc;
  rep.k_mpe = rep.k_inr + rep.k_grid_enc;
  rep.k_ig = rep.k_mlp + alpha * (rep.k_inr_enc + rep.k_grid_enc) + (1.0 - alpha) * rep.k_inr_enc;
  rep.inr_below_ig = spectral_comparison_oracle(j, rep.k_inr, rep.k_ig - rep.k_inr);
  rep.ig_below_mpe = spectral_comparison_oracle(j, rep.k_ig, rep.k_mpe - rep.k_ig);
  const Eigen::MatrixXd diff = symmetrize(rep.k_grid_enc - rep.k_inr_enc);
  const auto ds = eigen_spectrum(diff);
  const double tr = std::max(rep.k_grid_enc.trace() + rep.k_inr_enc.trace(), 1e-300);
  rep.premise_margin = ds.eigenvalues.empty() ? 0.0 : ds.eigenvalues.back() / tr;
  return rep;
}

double loglog_slope(std::span<const double> eigenvalues, std::size_t n) {
  const std::size_t hi = std::min(n / 2, eigenvalues.size());
  if (hi < 3) throw std::invalid_argument("too few eigenvalues for a slope fit");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double cnt = 0;
  for (std::size_t jj = 2; jj <= hi; ++jj) {
    const double x = std::log(double(jj));
    const double y = std::log(std::max(eigenvalues[jj - 1], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    cnt += 1;
  }
  return (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

// ---------------------------------------------------------------------------

NtkProblem make_ntk_problem(const VelocityGrid& trace, const NtkProblemOptions& opts) {
  if (trace.nx != 1) throw std::invalid_argument("the NTK problem needs a 1D trace");
  NtkProblem p;
  const Padding pad = halo_padding(trace, opts.pml_width, Boundary::PmlAllSides);
  p.truth = pad_model(trace, pad);
  p.m0 = pad_model(gaussian_smooth(trace, opts.smooth_sigma_cells), pad);
  p.geometry.boundary = Boundary::PmlAllSides;
  p.geometry.sources = {{pad.top, 0}};
  p.geometry.receivers = {{pad.top, 0}};
  p.wavelet = ricker(opts.peak_freq_hz, opts.dt, opts.nt);
  p.cfg.dt = opts.dt;
  p.cfg.nt = opts.nt;
  p.cfg.pml_width = opts.pml_width;
  p.cfg = freeze_pml(p.cfg, p.truth);
  p.sampling = opts.sampling;
  p.cells = interior_cells(p.truth, p.cfg, p.geometry.boundary);
  p.observed = ShotData::all(simulate_all(p.truth, p.wavelet, p.geometry, p.cfg));
  return p;
}

NtkProblem marmousi_1d_problem(const NtkProblemOptions& opts) {
  return make_ntk_problem(marmousi_trace(), opts);
}

MethodSpectrum method_spectrum(const NtkProblem& problem, const SensitivityJacobian& j,
                               const ReprSpec& spec, std::uint64_t seed) {
  MethodSpectrum out;
  out.method = repr_name(spec);
  const auto repr = init_repr(spec, problem.m0, seed);
  const auto k = repr->rep_ntk(j.cells);
  out.spectrum = eigen_spectrum(wave_ntk(j.j, k.k).m, Normalize::LambdaMaxToOne, out.method);
  const auto n = static_cast<std::size_t>(std::min(j.j.rows(), j.j.cols()));
  out.slope = loglog_slope(out.spectrum.eigenvalues, n);
  return out;
}

DecayOrdering decay_ordering(std::span<const MethodSpectrum> spectra, double margin) {
  DecayOrdering out;
  out.worst_margin = std::numeric_limits<double>::infinity();
  const MethodSpectrum* prev = nullptr;
  for (const char* name : {"grid", "hash", "ig", "siren"}) {
    const auto it = std::find_if(spectra.begin(), spectra.end(),
                                 [&](const MethodSpectrum& m) { return m.method == name; });
    if (it == spectra.end()) continue;
    out.chain.push_back(name);
    if (prev) {
      const double drop = prev->slope - it->slope;
      out.worst_margin = std::min(out.worst_margin, drop);
      if (drop < margin) out.ok = false;
    }
    prev = &*it;
  }
  if (out.chain.size() < 2) out.worst_margin = 0.0;
  return out;
}

double nuclear_norm(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(symmetric), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

double StationarityTrace::max_delta_nuclear() const {
  return delta_nuclear.empty() ? 0.0 : *std::max_element(delta_nuclear.begin(), delta_nuclear.end());
}

double StationarityTrace::max_delta_frobenius() const {
  return delta_frobenius.empty()
             ? 0.0
             : *std::max_element(delta_frobenius.begin(), delta_frobenius.end());
}

namespace {

ReprSpec shallow_spec(std::size_t width, const StationarityOptions& opts) {
  ReprSpec s;
  s.variant = ShallowNtkSpec{width, opts.omega0};
  s.output_scale = opts.output_scale;
  return s;
}

Eigen::MatrixXd wave_ntk_at(const NtkProblem& p, const Representation& repr) {
  const VelocityGrid m = repr.evaluate();
  const auto j = sensitivity_jacobian(m, p.wavelet, p.geometry, p.cfg, p.sampling, p.cells);
  const auto k = repr.rep_ntk(p.cells);
  return wave_ntk(j.j, k.k).m;
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(var / double(v.size() - 1)) : 0.0;
}

}  // namespace

StationarityTrace stationarity_experiment(const NtkProblem& problem,
                                          const StationarityOptions& opts) {
  if (opts.seeds == 0 || opts.kernel_every == 0)
    throw std::invalid_argument("stationarity needs seeds >= 1 and kernel_every >= 1");
  StationarityTrace out;
  for (std::size_t w : opts.widths) {
    WidthStats ws;
    ws.width = w;
    for (std::size_t s = 0; s < opts.seeds; ++s) {
      const auto repr = init_repr(shallow_spec(w, opts), problem.m0, opts.seed + s);
      const Eigen::MatrixXd theta = wave_ntk_at(problem, *repr);
      ws.nuclear.push_back(nuclear_norm(theta));
      ws.frobenius.push_back(theta.norm());
    }
    mean_std(ws.nuclear, ws.nuclear_mean, ws.nuclear_std);
    mean_std(ws.frobenius, ws.frobenius_mean, ws.frobenius_std);
    out.widths.push_back(std::move(ws));
  }

  auto repr = init_repr(shallow_spec(opts.train_width, opts), problem.m0, opts.seed);
  InversionMethod method;
  method.repr = repr->spec();
  AdamState adam = AdamState::make(repr->param_count(), opts.lr);
  const Eigen::MatrixXd theta0 = wave_ntk_at(problem, *repr);
  const double nuc0 = nuclear_norm(theta0), fro0 = theta0.norm();
  for (std::size_t epoch = 0;; ++epoch) {
    if (epoch % opts.kernel_every == 0 || epoch == opts.epochs) {
      const Eigen::MatrixXd theta = epoch == 0 ? theta0 : wave_ntk_at(problem, *repr);
      const Eigen::MatrixXd d = theta - theta0;
      out.epochs.push_back(epoch);
      out.delta_nuclear.push_back(nuclear_norm(d) / nuc0);
      out.delta_frobenius.push_back(d.norm() / fro0);
    }
    if (epoch == opts.epochs) break;
    const auto pg = param_gradient(*repr, problem.wavelet, problem.geometry, problem.cfg,
                                   problem.observed, method);
    out.misfit.push_back(pg.misfit);
    adam_step(repr->params(), pg.grad, adam);
  }
  return out;
}

DecayReport spectral_decay_check(const Eigen::MatrixXd& theta, const Eigen::VectorXd& residual0,
                                 std::span<const double> taus, double tolerance, double floor) {
  if (theta.rows() != theta.cols() || theta.rows() != residual0.size())
    throw std::invalid_argument("decay check: shape mismatch");
  const Eigen::MatrixXd sym = symmetrize(theta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigen decomposition failed");
  DecayReport rep;
  rep.taus.assign(taus.begin(), taus.end());
  const auto& lam = es.eigenvalues();
  const auto& phi = es.eigenvectors();
  rep.eigenvalues.assign(lam.data(), lam.data() + lam.size());
  const double lam_max = std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  const Eigen::VectorXd c0 = phi.transpose() * residual0;
  const double norm0 = residual0.norm();
  for (double tau : taus) {
    const Eigen::MatrixXd prop = (-tau * sym).exp();
    const Eigen::VectorXd e = prop * residual0;
    const Eigen::VectorXd c = phi.transpose() * e;
    for (Eigen::Index k = 0; k < lam.size(); ++k) {
      // Eigenvalues at round-off level are zero modes.
      const double lk = std::abs(lam(k)) < 1e-12 * lam_max ? 0.0 : lam(k);
      const double predicted = std::exp(-lk * tau) * c0(k);
      if (std::abs(predicted) <= floor * norm0) continue;
      ++rep.retained;
      const double err = std::abs(c(k) - predicted) / std::abs(predicted);
      rep.max_rel_error = std::max(rep.max_rel_error, err);
      if (err > tolerance) rep.ok = false;
    }
  }
  return rep;
}

void write_spectrum_csv(const SpectrumReport& s, std::ostream& os) {
  os << "index,eigenvalue\n";
  char buf[48];
  for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g", s.eigenvalues[i]);
    os << i + 1 << ',' << buf << '\n';
  }
}

void write_stationarity_csv(const StationarityTrace& t, std::ostream& os) {
  os << "epoch,delta,delta_frobenius\n";
  char buf[64];
  for (std::size_t i = 0; i < t.epochs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g", t.delta_nuclear[i], t.delta_frobenius[i]);
    os << t.epochs[i] << ',' << buf << '\n';
  }
}

void write_width_stats_csv(const StationarityTrace& t, std::ostream& os) {
  os << "width,nuclear_mean,nuclear_std,nuclear_rel_std,frobenius_mean,frobenius_std,"
        "frobenius_rel_std\n";
  char buf[160];
  for (const auto& w : t.widths) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g", w.nuclear_mean,
                  w.nuclear_std, w.nuclear_rel_std(), w.frobenius_mean, w.frobenius_std,
                  w.frobenius_rel_std());
    os << w.width << ',' << buf << '\n';
  }
}

}  // namespace crfwi
