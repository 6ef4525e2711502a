#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "crfwi/adjoint.hpp"
#include "crfwi/model_core.hpp"
#include "crfwi/nn.hpp"

namespace crfwi {

/// Maps cell indices to [-1, 1]^d; corners map to +-1, a degenerate axis to 0.
struct CoordinateBox {
  std::size_t nz = 1;
  std::size_t nx = 1;
  int dims = 1;

  static CoordinateBox for_grid(const VelocityGrid& g) { return {g.nz, g.nx, g.dims()}; }
  double z(std::size_t iz) const { return nz > 1 ? -1.0 + 2.0 * double(iz) / double(nz - 1) : 0.0; }
  double x(std::size_t ix) const { return nx > 1 ? -1.0 + 2.0 * double(ix) / double(nx - 1) : 0.0; }
  /// dims x n matrix of coordinates (row 0 = z, row 1 = x in 2D).
  nn::Matrix coordinates(std::span<const std::size_t> cells) const;
};

struct DirectGridSpec {};

struct SirenSpec {
  std::size_t depth = 4;  // hidden sine layers
  std::size_t width = 128;
  double omega0 = 30.0;
};

struct GaborSpec {
  std::size_t depth = 4;
  std::size_t width = 200;
  double omega0 = 5.0;
  double s0 = 5.0;
};

struct LowRankSpec {
  std::size_t r1 = 0;  // 0: half of the smaller model dimension
  std::size_t r2 = 0;
  std::size_t depth = 3;
  std::size_t width = 128;
  double omega0 = 30.0;
  double core_scale = 1e-2;
};

struct HashGridSpec {
  std::size_t levels = 16;
  std::size_t features = 2;
  double base_resolution = 50.0;
  double per_level_scale = 1.05;
  std::size_t log2_table_size = 14;
  std::size_t head_width = 64;
  std::size_t head_depth = 2;
  double table_init = 1e-4;
};

struct HybridIgSpec {
  HashGridSpec hash;
  std::size_t inr_width = 128;
  std::size_t inr_depth = 2;
  double omega0 = 30.0;
  std::size_t inr_features = 0;  // n_r; 0: levels * features
  double alpha = 0.5;
  // Fixed multiplier on the INR features. 0.1 brings the INR and grid encoder
  // gradient norms to the same order at init.
  double inr_gain = 0.1;
  std::size_t head_width = 64;
  std::size_t head_depth = 2;
};

/// One-hidden-layer network with 1/sqrt(width) output scaling and N(0,1)
/// initialization of every weight and bias.
struct ShallowNtkSpec {
  std::size_t width = 1024;
  double omega0 = 1.0;  // sine activation frequency
};

using ReprVariant = std::variant<DirectGridSpec, SirenSpec, GaborSpec, LowRankSpec, HashGridSpec,
                                 HybridIgSpec, ShallowNtkSpec>;

struct ReprSpec {
  ReprVariant variant = DirectGridSpec{};
  // Network outputs are multiplied by this before being added to m0 (m/s).
  // Ignored by DirectGrid, whose parameters are already in m/s.
  double output_scale = 1000.0;
  double min_velocity = -std::numeric_limits<double>::infinity();
  double max_velocity = std::numeric_limits<double>::infinity();
};

std::string repr_name(const ReprSpec& spec);

struct RepNtkMatrix {
  Eigen::MatrixXd k;
  std::vector<std::size_t> points;
};

inline constexpr double kJacobianEntryGuard = 5e7;

/// m_theta(x) = clamp(m0(x) + scale * F_theta(x)). Subclasses implement F.
class Representation {
 public:
  virtual ~Representation() = default;

  std::span<double> params() noexcept { return store_.values(); }
  std::span<const double> params() const noexcept { return store_.values(); }
  std::size_t param_count() const noexcept { return store_.size(); }
  const std::vector<nn::Segment>& segments() const noexcept { return store_.segments(); }
  const VelocityGrid& initial_model() const noexcept { return m0_; }
  const ReprSpec& spec() const noexcept { return spec_; }
  const CoordinateBox& box() const noexcept { return box_; }

  /// Raw network output F at the given cells.
  virtual std::vector<double> perturbation(std::span<const std::size_t> cells) const = 0;
  /// Accumulates sum_j d_f[j] dF(cells[j])/dtheta into grad.
  virtual void perturbation_backward(std::span<const std::size_t> cells,
                                     std::span<const double> d_f,
                                     std::span<double> grad) const = 0;

  double output_scale() const;
  VelocityGrid evaluate() const;
  std::vector<double> backprop_params(const ModelGradient& upstream) const;
  Eigen::MatrixXd param_jacobian(std::span<const std::size_t> cells,
                                 double guard = kJacobianEntryGuard) const;
  RepNtkMatrix rep_ntk(std::span<const std::size_t> cells,
                       double guard = kJacobianEntryGuard) const;

  std::vector<std::size_t> all_cells() const;

 protected:
  Representation(const ReprSpec& spec, const VelocityGrid& m0);

  // dm/dF at each cell: scale inside the bounds, 0 where the clamp is active.
  std::vector<double> chain_factor(std::span<const std::size_t> cells,
                                   std::span<const double> f) const;

  ReprSpec spec_;
  VelocityGrid m0_;
  CoordinateBox box_;
  nn::ParamStore store_;
};

std::unique_ptr<Representation> init_repr(const ReprSpec& spec, const VelocityGrid& m0,
                                          std::uint64_t seed);

// Concrete representations whose internals are inspected by tests and the NTK lab.

class DirectGridRepr final : public Representation {
 public:
  DirectGridRepr(const ReprSpec& spec, const VelocityGrid& m0);
  std::vector<double> perturbation(std::span<const std::size_t> cells) const override;
  void perturbation_backward(std::span<const std::size_t> cells, std::span<const double> d_f,
                             std::span<double> grad) const override;
};

class MlpRepr final : public Representation {
 public:
  // Siren, Gabor and shallow-NTK networks.
  MlpRepr(const ReprSpec& spec, const VelocityGrid& m0, std::uint64_t seed);
  std::vector<double> perturbation(std::span<const std::size_t> cells) const override;
  void perturbation_backward(std::span<const std::size_t> cells, std::span<const double> d_f,
                             std::span<double> grad) const override;
  const nn::Mlp& mlp() const noexcept { return mlp_; }

 private:
  nn::Mlp mlp_;
};

class LowRankRepr final : public Representation {
 public:
  LowRankRepr(const ReprSpec& spec, const VelocityGrid& m0, std::uint64_t seed);
  std::vector<double> perturbation(std::span<const std::size_t> cells) const override;
  void perturbation_backward(std::span<const std::size_t> cells, std::span<const double> d_f,
                             std::span<double> grad) const override;
  std::size_t r1() const noexcept { return r1_; }
  std::size_t r2() const noexcept { return r2_; }
  /// Full nz x nx perturbation F1 C F2^T.
  Eigen::MatrixXd perturbation_grid() const;

 private:
  std::size_t r1_, r2_;
  nn::Mlp f1_, f2_;
  std::size_t core_offset_;
};

/// Multiresolution grid of learned features with d-linear interpolation.
/// Levels whose vertex lattice fits in the table use dense indexing; larger
/// levels use the spatial hash (xor_i v_i pi_i) mod T.
class HashEncoding {
 public:
  HashEncoding() = default;
  HashEncoding(nn::ParamStore& store, const std::string& prefix, const HashGridSpec& spec,
               int dims);

  struct Level {
    double resolution = 0;       // lattice cells per unit coordinate
    std::size_t vertices_per_axis = 0;
    std::size_t table_entries = 0;
    bool dense = true;
    std::size_t offset = 0;      // into theta
  };

  std::size_t output_dim() const { return levels_.size() * features_; }
  const std::vector<Level>& levels() const noexcept { return levels_; }
  std::size_t features() const noexcept { return features_; }
  int dims() const noexcept { return dims_; }
  std::size_t table_size() const noexcept { return table_size_; }

  /// Table slot of an integer vertex on a level.
  std::size_t slot(const Level& level, std::span<const std::uint64_t> vertex) const;

  /// Features for points given in [-1,1]^d (dims x n); output (levels*features) x n.
  nn::Matrix encode(const double* theta, const nn::Matrix& coords) const;
  void backward(const nn::Matrix& coords, const nn::Matrix& d_features, double* grad) const;

  void init(std::span<double> theta, double bound, std::mt19937_64& rng) const;

 private:
  template <typename Fn>
  void for_each_corner(const Level& level, const double* point, Fn&& fn) const;

  std::vector<Level> levels_;
  std::size_t features_ = 2;
  std::size_t table_size_ = 1u << 14;
  int dims_ = 1;
};

inline constexpr std::uint64_t kHashPrimes[3] = {1ull, 2654435761ull, 805459861ull};

class HashGridRepr final : public Representation {
 public:
  HashGridRepr(const ReprSpec& spec, const VelocityGrid& m0, std::uint64_t seed);
  std::vector<double> perturbation(std::span<const std::size_t> cells) const override;
  void perturbation_backward(std::span<const std::size_t> cells, std::span<const double> d_f,
                             std::span<double> grad) const override;
  const HashEncoding& encoding() const noexcept { return enc_; }
  const nn::Mlp& head() const noexcept { return head_; }

 private:
  HashEncoding enc_;
  nn::Mlp head_;
};

class HybridIgRepr final : public Representation {
 public:
  HybridIgRepr(const ReprSpec& spec, const VelocityGrid& m0, std::uint64_t seed);
  std::vector<double> perturbation(std::span<const std::size_t> cells) const override;
  void perturbation_backward(std::span<const std::size_t> cells, std::span<const double> d_f,
                             std::span<double> grad) const override;

  /// Scaled feature blocks entering the fused MLP: [sqrt(a) h(x); sqrt(1-a) gain I(x)].
  nn::Matrix fused_features(std::span<const std::size_t> cells) const;
  std::size_t hash_dim() const { return enc_.output_dim(); }
  std::size_t inr_dim() const { return inr_.out_dim(); }
  double alpha() const noexcept { return alpha_; }
  const HashEncoding& encoding() const noexcept { return enc_; }
  const nn::Mlp& inr() const noexcept { return inr_; }
  const nn::Mlp& head() const noexcept { return head_; }

 private:
  HashEncoding enc_;
  nn::Mlp inr_;
  nn::Mlp head_;
  double alpha_;
  double gain_;
};

/// Named-segment checkpoint: `<path>.bin` holds little-endian f64 values,
/// `<path>.manifest` lists "name offset length" per segment.
void save_checkpoint(const Representation& repr, const std::string& path);
void load_checkpoint(Representation& repr, const std::string& path);

}  // namespace crfwi
