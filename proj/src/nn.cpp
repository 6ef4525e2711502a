#include "crfwi/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace crfwi::nn {

std::size_t ParamStore::add(std::string name, std::size_t length) {
  const std::size_t offset = values_.size();
  values_.resize(offset + length, 0.0);
  segments_.push_back({std::move(name), offset, length});
  return offset;
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& dims,
         ActivationParams hidden, ActivationParams last) {
  if (dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw std::invalid_argument("mlp dims must be positive");
    Dense d;
    d.in = dims[i];
    d.out = dims[i + 1];
    const std::string name = prefix + ".l" + std::to_string(i);
    d.w_offset = store.add(name + ".weight", d.in * d.out);
    d.b_offset = store.add(name + ".bias", d.out);
    d.act = (i + 2 == dims.size()) ? last : hidden;
    layers_.push_back(d);
  }
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.in * l.out + l.out;
  return n;
}

Matrix activate(const ActivationParams& a, const Matrix& z) {
  switch (a.kind) {
    case Activation::Identity:
      return z;
    case Activation::Sine:
      return (a.omega0 * z.array()).sin().matrix();
    case Activation::Gabor: {
      const auto sz = (a.s0 * z.array());
      return ((-sz.square()).exp() * (a.omega0 * z.array()).cos()).matrix();
    }
    case Activation::Relu:
      return z.cwiseMax(0.0);
  }
  return z;
}

Matrix activate_derivative(const ActivationParams& a, const Matrix& z) {
  switch (a.kind) {
    case Activation::Identity:
      return Matrix::Ones(z.rows(), z.cols());
    case Activation::Sine:
      return (a.omega0 * (a.omega0 * z.array()).cos()).matrix();
    case Activation::Gabor: {
      const auto za = z.array();
      const auto env = (-(a.s0 * za).square()).exp();
      const auto wz = a.omega0 * za;
      return (env * (-2.0 * a.s0 * a.s0 * za * wz.cos() - a.omega0 * wz.sin())).matrix();
    }
    case Activation::Relu:
      return (z.array() > 0.0).cast<double>().matrix();
  }
  return Matrix::Ones(z.rows(), z.cols());
}

Matrix Mlp::forward(const double* theta, const Matrix& x, MlpCache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = x;
  for (const auto& l : layers_) {
    RowMatrixMap w(theta + l.w_offset, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(theta + l.b_offset, l.out);
    Matrix z = l.weight_scale * (w * h);
    z.colwise() += b;
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(z);
    }
    h = activate(l.act, z);
  }
  return h;
}

Matrix Mlp::backward(const double* theta, const MlpCache& cache, const Matrix& d_out,
                     double* grad) const {
  Matrix d = d_out;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    const Matrix& z = cache.pre[li];
    Matrix dz = l.act.kind == Activation::Identity
                    ? d
                    : Matrix(d.cwiseProduct(activate_derivative(l.act, z)));
    RowMatrixMap w(theta + l.w_offset, l.out, l.in);
    MutRowMatrixMap gw(grad + l.w_offset, l.out, l.in);
    Eigen::Map<Eigen::VectorXd> gb(grad + l.b_offset, l.out);
    gw.noalias() += l.weight_scale * (dz * cache.inputs[li].transpose());
    gb += dz.rowwise().sum();
    d = l.weight_scale * (w.transpose() * dz);
  }
  return d;
}

void init_uniform(std::span<double> theta, std::size_t offset, std::size_t length, double bound,
                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t i = 0; i < length; ++i) theta[offset + i] = u(rng);
}

void init_normal(std::span<double> theta, std::size_t offset, std::size_t length, double stddev,
                 std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (std::size_t i = 0; i < length; ++i) theta[offset + i] = n(rng);
}

void init_siren(const Mlp& mlp, std::span<double> theta, double omega0, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < mlp.layers().size(); ++i) {
    const auto& l = mlp.layers()[i];
    const double fan_in = static_cast<double>(l.in);
    const double wb = i == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / omega0;
    init_uniform(theta, l.w_offset, l.in * l.out, wb, rng);
    init_uniform(theta, l.b_offset, l.out, 1.0 / std::sqrt(fan_in), rng);
  }
}

void init_relu(const Mlp& mlp, std::span<double> theta, std::mt19937_64& rng) {
  for (const auto& l : mlp.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    init_uniform(theta, l.w_offset, l.in * l.out, bound, rng);
    init_uniform(theta, l.b_offset, l.out, bound, rng);
  }
}

}  // namespace crfwi::nn
