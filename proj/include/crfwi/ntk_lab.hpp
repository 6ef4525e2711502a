#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crfwi/inversion.hpp"
#include "crfwi/model_core.hpp"
#include "crfwi/representations.hpp"
#include "crfwi/wave_solver.hpp"

namespace crfwi {

struct JacobianSampling {
  std::size_t receiver_stride = 1;
  std::size_t time_stride = 5;  // samples t = stride, 2 stride, ... (U^0 is identically zero)
};

struct DataSample {
  std::size_t shot = 0, receiver = 0, time = 0;
};

/// J[j, c] = d(data sample j) / d(velocity of cells[c]).
struct SensitivityJacobian {
  Eigen::MatrixXd j;
  std::vector<DataSample> rows;
  std::vector<std::size_t> cells;
};

inline constexpr double kSensitivityGuard = 5e7;

/// One reverse pass per sampled data point, sharing each shot's forward run.
/// `cells` empty selects every cell.
SensitivityJacobian sensitivity_jacobian(const VelocityGrid& grid, const Wavelet& wavelet,
                                         const AcquisitionGeometry& geometry,
                                         const SolverConfig& cfg, const JacobianSampling& sampling,
                                         std::span<const std::size_t> cells = {},
                                         double guard = kSensitivityGuard);

/// Cells outside every absorbing layer, in row-major order.
std::vector<std::size_t> interior_cells(const VelocityGrid& grid, const SolverConfig& cfg,
                                        Boundary boundary);

struct KernelMatrix {
  Eigen::MatrixXd m;
  std::string label;
};

/// J J^T, symmetrized. Computed as wave_ntk(J, I) would be, so the two agree bitwise.
KernelMatrix wave_kernel(const Eigen::MatrixXd& j);
/// J K J^T, symmetrized.
KernelMatrix wave_ntk(const Eigen::MatrixXd& j, const Eigen::MatrixXd& k);

enum class Normalize { None, LambdaMaxToOne };

struct SpectrumReport {
  std::vector<double> eigenvalues;  // non-increasing
  std::string label;
  Normalize normalization = Normalize::None;
  double scale = 1.0;  // factor applied to the raw eigenvalues
};

inline constexpr std::size_t kMaxEigenDim = 2000;

SpectrumReport eigen_spectrum(const Eigen::MatrixXd& m, Normalize normalize = Normalize::None,
                              std::string label = {});

/// Per-index check lower_j <= upper_j + tol * upper_1.
struct OrderingReport {
  bool ok = true;
  std::size_t violations = 0;
  std::size_t first_violation = std::numeric_limits<std::size_t>::max();
  double worst_excess = 0.0;  // max_j (lower_j - upper_j) / upper_1
  std::vector<double> upper, lower;
};

OrderingReport compare_spectra(std::span<const double> upper, std::span<const double> lower,
                               double rel_tol = 1e-10);

/// With K1 = K2 + bump (bump PSD), checks lambda_j(J K1 J^T) >= lambda_j(J K2 J^T).
OrderingReport spectral_comparison_oracle(const Eigen::MatrixXd& j, const Eigen::MatrixXd& k2,
                                          const Eigen::MatrixXd& bump, double rel_tol = 1e-10);

/// Scales K to unit largest eigenvalue and checks lambda_j(J K J^T) <= lambda_j(J J^T).
OrderingReport identity_dominance_check(const Eigen::MatrixXd& j, const Eigen::MatrixXd& k,
                                        double rel_tol = 1e-10);

/// Writes J, K2 and bump as KMAT files `<prefix>.{j,k2,bump}.kmat` plus a text note
/// with the first violating index.
void dump_counterexample(const std::string& prefix, const Eigen::MatrixXd& j,
                         const Eigen::MatrixXd& k2, const Eigen::MatrixXd& bump,
                         const OrderingReport& report);

/// KMAT: magic "KMAT" | u32 rows | u32 cols | rows*cols f32 row-major, little-endian.
std::vector<std::uint8_t> encode_kernel_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd decode_kernel_matrix(std::span<const std::uint8_t> bytes);
void save_kernel_matrix(const Eigen::MatrixXd& m, const std::string& path);

/// Shared-head construction on a hybrid network: its parameter Jacobian is split
/// into head, grid-encoding and INR-encoding blocks. With unit-scaled encoder
/// kernels K_inr, K_grid:
///   K_INR = K_MLP + K_inr,  K_MPE = K_INR + K_grid,
///   K_IG  = K_MLP + alpha K_MPE_enc + (1 - alpha) K_INR_enc,
/// so K_INR <= K_IG <= K_MPE and the wave-based spectra must interleave.
struct SandwichReport {
  Eigen::MatrixXd k_mlp, k_inr_enc, k_grid_enc;
  Eigen::MatrixXd k_inr, k_ig, k_mpe;
  OrderingReport inr_below_ig, ig_below_mpe;
  // Smallest eigenvalue of K_grid - K_inr over trace: >= 0 means the network
  // itself already satisfies the dominance premise without construction.
  double premise_margin = 0.0;
  bool ok() const { return inr_below_ig.ok && ig_below_mpe.ok; }
};

SandwichReport shared_head_sandwich(const HybridIgRepr& repr, const Eigen::MatrixXd& j,
                                    std::span<const std::size_t> cells);

/// Least-squares slope of log(lambda_j) against log(j) over 1-based j in [2, n/2].
/// Non-positive eigenvalues in the window are floored at 1e-300.
double loglog_slope(std::span<const double> eigenvalues, std::size_t n);

// ---------------------------------------------------------------------------
// 1D laboratory problem: a depth trace padded with absorbing layers, a source
// and receiver at the first interior cell.

struct NtkProblem {
  VelocityGrid truth;  // padded
  VelocityGrid m0;     // padded smooth start
  AcquisitionGeometry geometry;
  Wavelet wavelet;
  SolverConfig cfg;
  JacobianSampling sampling;
  std::vector<std::size_t> cells;  // interior cells (J columns)
  ShotData observed;
};

struct NtkProblemOptions {
  std::size_t pml_width = 20;
  double peak_freq_hz = 8.0;
  double dt = 1.9e-3;
  std::size_t nt = 1000;
  double smooth_sigma_cells = 6.0;
  JacobianSampling sampling;
};

NtkProblem marmousi_1d_problem(const NtkProblemOptions& opts = {});
NtkProblem make_ntk_problem(const VelocityGrid& trace, const NtkProblemOptions& opts);

/// Spectrum of J(m0) K J^T for a representation initialized on the problem's m0.
/// DirectGrid yields the wave kernel.
struct MethodSpectrum {
  std::string method;
  SpectrumReport spectrum;  // lambda_max normalized
  double slope = 0.0;
};

MethodSpectrum method_spectrum(const NtkProblem& problem, const SensitivityJacobian& j,
                               const ReprSpec& spec, std::uint64_t seed);

/// Slopes must fall along grid, hash, ig, siren (the ones present), each step
/// by at least `margin`.
struct DecayOrdering {
  bool ok = true;
  std::vector<std::string> chain;
  double worst_margin = 0.0;  // smallest consecutive slope drop
};

DecayOrdering decay_ordering(std::span<const MethodSpectrum> spectra, double margin = 0.05);

struct StationarityOptions {
  std::vector<std::size_t> widths{64, 256, 1024};
  std::size_t seeds = 10;
  std::size_t epochs = 200;
  std::size_t train_width = 1024;
  std::size_t kernel_every = 10;  // recompute the training kernel every N epochs
  double lr = 1e-3;
  double output_scale = 300.0;  // about the RMS of truth - m0 on the 1D trace
  double omega0 = 1.0;
  std::uint64_t seed = 0;
};

struct WidthStats {
  std::size_t width = 0;
  std::vector<double> nuclear, frobenius;  // per seed
  double nuclear_mean = 0, nuclear_std = 0, frobenius_mean = 0, frobenius_std = 0;
  double nuclear_rel_std() const { return nuclear_std / nuclear_mean; }
  double frobenius_rel_std() const { return frobenius_std / frobenius_mean; }
};

struct StationarityTrace {
  std::vector<WidthStats> widths;
  std::vector<std::size_t> epochs;
  std::vector<double> delta_nuclear, delta_frobenius;  // |Theta(t) - Theta(0)| / |Theta(0)|
  std::vector<double> misfit;
  double max_delta_nuclear() const;
  double max_delta_frobenius() const;
};

double nuclear_norm(const Eigen::MatrixXd& symmetric);

StationarityTrace stationarity_experiment(const NtkProblem& problem,
                                          const StationarityOptions& opts);

/// Linear flow de/dtau = -Theta e, integrated with the matrix exponential and
/// projected on Theta's eigenvectors. Modes whose predicted projection is above
/// `floor` * |e(0)| are compared with exp(-lambda_k tau) <e(0), phi_k>.
struct DecayReport {
  std::vector<double> taus;
  std::vector<double> eigenvalues;
  std::size_t retained = 0;
  double max_rel_error = 0.0;
  bool ok = true;  // every retained comparison within `tolerance`
};

DecayReport spectral_decay_check(const Eigen::MatrixXd& theta, const Eigen::VectorXd& residual0,
                                 std::span<const double> taus, double tolerance = 0.05,
                                 double floor = 1e-6);

void write_spectrum_csv(const SpectrumReport& s, std::ostream& os);
void write_stationarity_csv(const StationarityTrace& t, std::ostream& os);
void write_width_stats_csv(const StationarityTrace& t, std::ostream& os);

}  // namespace crfwi
