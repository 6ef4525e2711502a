#pragma once

// Minimal reverse-mode differentiation for small dense coordinate networks.
// Parameters live in one flat vector owned by the caller; layers refer to it by
// offset so that optimizers and finite-difference checks see a single theta.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace crfwi::nn {

using Matrix = Eigen::MatrixXd;  // features x points
using RowMatrixMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutRowMatrixMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

class ParamStore {
 public:
  std::size_t add(std::string name, std::size_t length);
  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

 private:
  std::vector<double> values_;
  std::vector<Segment> segments_;
};

enum class Activation { Identity, Sine, Gabor, Relu };

struct ActivationParams {
  Activation kind = Activation::Identity;
  double omega0 = 1.0;  // Sine: sin(omega0 z); Gabor: exp(-(s0 z)^2) cos(omega0 z)
  double s0 = 1.0;
};

/// z = weight_scale * W x + b, a = act(z). W is out x in, row-major in theta.
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t w_offset = 0;
  std::size_t b_offset = 0;
  double weight_scale = 1.0;
  ActivationParams act;
};

struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
};

class Mlp {
 public:
  Mlp() = default;

  /// Registers layers of widths dims[0] -> dims[1] -> ... in `store`.
  /// `hidden` applies to every layer except the last, which uses `last`.
  Mlp(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& dims,
      ActivationParams hidden, ActivationParams last);

  std::size_t in_dim() const { return layers_.front().in; }
  std::size_t out_dim() const { return layers_.back().out; }
  const std::vector<Dense>& layers() const noexcept { return layers_; }
  std::vector<Dense>& layers() noexcept { return layers_; }
  std::size_t param_count() const;

  Matrix forward(const double* theta, const Matrix& x, MlpCache* cache) const;

  /// Accumulates d<d_out, y>/dtheta into grad (same layout as theta) and
  /// returns the gradient with respect to the network input.
  Matrix backward(const double* theta, const MlpCache& cache, const Matrix& d_out,
                  double* grad) const;

 private:
  std::vector<Dense> layers_;
};

Matrix activate(const ActivationParams& a, const Matrix& z);
Matrix activate_derivative(const ActivationParams& a, const Matrix& z);

// Initializers write into theta at a layer's offsets.
void init_uniform(std::span<double> theta, std::size_t offset, std::size_t length, double bound,
                  std::mt19937_64& rng);
void init_normal(std::span<double> theta, std::size_t offset, std::size_t length, double stddev,
                 std::mt19937_64& rng);

/// SIREN convention: first layer U(-1/in, 1/in), later layers
/// U(-sqrt(6/in)/omega0, +sqrt(6/in)/omega0); biases U(-1/sqrt(in), 1/sqrt(in)).
void init_siren(const Mlp& mlp, std::span<double> theta, double omega0, std::mt19937_64& rng);

/// Default linear-layer init for ReLU heads: weights and biases U(-1/sqrt(in), 1/sqrt(in)).
void init_relu(const Mlp& mlp, std::span<double> theta, std::mt19937_64& rng);

}  // namespace crfwi::nn
