#include "crfwi/representations.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crfwi/errors.hpp"

namespace crfwi {

using nn::Activation;
using nn::ActivationParams;
using nn::Matrix;

nn::Matrix CoordinateBox::coordinates(std::span<const std::size_t> cells) const {
  Matrix c(dims, static_cast<Eigen::Index>(cells.size()));
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const std::size_t iz = cells[j] / nx;
    const std::size_t ix = cells[j] % nx;
    c(0, j) = z(iz);
    if (dims == 2) c(1, j) = x(ix);
  }
  return c;
}

namespace {

struct NameVisitor {
  std::string operator()(const DirectGridSpec&) const { return "grid"; }
  std::string operator()(const SirenSpec&) const { return "siren"; }
  std::string operator()(const GaborSpec&) const { return "gabor"; }
  std::string operator()(const LowRankSpec&) const { return "lowrank"; }
  std::string operator()(const HashGridSpec&) const { return "hash"; }
  std::string operator()(const HybridIgSpec&) const { return "ig"; }
  std::string operator()(const ShallowNtkSpec&) const { return "shallow"; }
};

std::vector<std::size_t> hidden_dims(std::size_t in, std::size_t width, std::size_t depth,
                                     std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i < depth; ++i) dims.push_back(width);
  dims.push_back(out);
  return dims;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void validate_hash(const HashGridSpec& h) {
  require(h.levels > 0 && h.features > 0, "hash grid needs levels and features");
  require(h.base_resolution >= 1.0, "hash grid base resolution must be >= 1");
  require(h.per_level_scale >= 1.0, "hash grid per-level scale must be >= 1");
  require(h.log2_table_size >= 1 && h.log2_table_size <= 30, "hash table size out of range");
  require(h.head_width > 0, "hash head width must be positive");
  require(h.table_init >= 0.0, "hash table init must be non-negative");
}

Matrix column_features(std::span<const double> f) {
  Matrix m(1, static_cast<Eigen::Index>(f.size()));
  for (std::size_t j = 0; j < f.size(); ++j) m(0, j) = f[j];
  return m;
}

std::vector<double> row_to_vector(const Matrix& m) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) v[j] = m(0, j);
  return v;
}

}  // namespace

std::string repr_name(const ReprSpec& spec) { return std::visit(NameVisitor{}, spec.variant); }

// ---------------------------------------------------------------------------
// Representation base

Representation::Representation(const ReprSpec& spec, const VelocityGrid& m0)
    : spec_(spec), m0_(m0), box_(CoordinateBox::for_grid(m0)) {
  m0.validate();
  require(std::isfinite(spec.output_scale) && spec.output_scale > 0.0,
          "output scale must be positive");
  require(!(spec.min_velocity > spec.max_velocity), "velocity bounds are inverted");
}

double Representation::output_scale() const {
  return std::holds_alternative<DirectGridSpec>(spec_.variant) ? 1.0 : spec_.output_scale;
}

std::vector<std::size_t> Representation::all_cells() const {
  std::vector<std::size_t> c(m0_.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = i;
  return c;
}

VelocityGrid Representation::evaluate() const {
  const auto cells = all_cells();
  const auto f = perturbation(cells);
  VelocityGrid out = m0_;
  const double s = output_scale();
  for (std::size_t i = 0; i < f.size(); ++i) {
    out.values[i] = std::clamp(m0_.values[i] + s * f[i], spec_.min_velocity, spec_.max_velocity);
  }
  return out;
}

std::vector<double> Representation::chain_factor(std::span<const std::size_t> cells,
                                                 std::span<const double> f) const {
  const double s = output_scale();
  std::vector<double> c(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const double m = m0_.values[cells[j]] + s * f[j];
    c[j] = (m < spec_.min_velocity || m > spec_.max_velocity) ? 0.0 : s;
  }
  return c;
}

std::vector<double> Representation::backprop_params(const ModelGradient& upstream) const {
  if (upstream.nz != m0_.nz || upstream.nx != m0_.nx || upstream.values.size() != m0_.size()) {
    throw std::invalid_argument("upstream gradient shape does not match the model");
  }
  const auto cells = all_cells();
  const auto f = perturbation(cells);
  auto d = chain_factor(cells, f);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= upstream.values[i];
  std::vector<double> grad(param_count(), 0.0);
  perturbation_backward(cells, d, grad);
  return grad;
}

Eigen::MatrixXd Representation::param_jacobian(std::span<const std::size_t> cells,
                                               double guard) const {
  const double entries = double(cells.size()) * double(param_count());
  if (entries > guard) throw ResourceGuard("parameter jacobian (entries)", entries, guard);
  for (auto c : cells) {
    if (c >= m0_.size()) throw std::invalid_argument("sample point outside the grid");
  }
  const auto f = perturbation(cells);
  const auto chain = chain_factor(cells, f);
  Eigen::MatrixXd g(static_cast<Eigen::Index>(cells.size()),
                    static_cast<Eigen::Index>(param_count()));
  std::vector<double> row(param_count());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    std::fill(row.begin(), row.end(), 0.0);
    const std::size_t one = cells[j];
    const double d = chain[j];
    if (d != 0.0) perturbation_backward({&one, 1}, {&d, 1}, row);
    g.row(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
  }
  return g;
}

RepNtkMatrix Representation::rep_ntk(std::span<const std::size_t> cells, double guard) const {
  const Eigen::MatrixXd g = param_jacobian(cells, guard);
  RepNtkMatrix out;
  out.k = g * g.transpose();
  out.k = 0.5 * (out.k + out.k.transpose()).eval();
  out.points.assign(cells.begin(), cells.end());
  return out;
}

// ---------------------------------------------------------------------------
// DirectGrid

DirectGridRepr::DirectGridRepr(const ReprSpec& spec, const VelocityGrid& m0)
    : Representation(spec, m0) {
  store_.add("grid.values", m0.size());
}

std::vector<double> DirectGridRepr::perturbation(std::span<const std::size_t> cells) const {
  std::vector<double> f(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) f[j] = store_.values()[cells[j]];
  return f;
}

void DirectGridRepr::perturbation_backward(std::span<const std::size_t> cells,
                                           std::span<const double> d_f,
                                           std::span<double> grad) const {
  for (std::size_t j = 0; j < cells.size(); ++j) grad[cells[j]] += d_f[j];
}

// ---------------------------------------------------------------------------
// Single coordinate network (Siren, Gabor, shallow NTK form)

MlpRepr::MlpRepr(const ReprSpec& spec, const VelocityGrid& m0, std::uint64_t seed)
    : Representation(spec, m0) {
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(box_.dims);
  const ActivationParams linear{Activation::Identity, 1.0, 1.0};
  if (const auto* s = std::get_if<SirenSpec>(&spec.variant)) {
    require(s->depth > 0 && s->width > 0 && s->omega0 > 0.0, "invalid siren spec");
    mlp_ = nn::Mlp(store_, "siren", hidden_dims(d, s->width, s->depth, 1),
                   {Activation::Sine, s->omega0, 1.0}, linear);
    nn::init_siren(mlp_, params(), s->omega0, rng);
  } else if (const auto* g = std::get_if<GaborSpec>(&spec.variant)) {
    require(g->depth > 0 && g->width > 0 && g->omega0 > 0.0 && g->s0 >= 0.0,
            "invalid gabor spec");
    mlp_ = nn::Mlp(store_, "gabor", hidden_dims(d, g->width, g->depth, 1),
                   {Activation::Gabor, g->omega0, g->s0}, linear);
    nn::init_relu(mlp_, params(), rng);
  } else if (const auto* n = std::get_if<ShallowNtkSpec>(&spec.variant)) {
    require(n->width > 0 && n->omega0 > 0.0, "invalid shallow network spec");
    mlp_ = nn::Mlp(store_, "shallow", {d, n->width, 1}, {Activation::Sine, n->omega0, 1.0},
                   linear);
    mlp_.layers()[1].weight_scale = 1.0 / std::sqrt(static_cast<double>(n->width));
    nn::init_normal(params(), 0, param_count(), 1.0, rng);
  } else {
    throw std::invalid_argument("MlpRepr needs a siren, gabor or shallow spec");
  }
}

std::vector<double> MlpRepr::perturbation(std::span<const std::size_t> cells) const {
  return row_to_vector(mlp_.forward(store_.data(), box_.coordinates(cells), nullptr));
}

void MlpRepr::perturbation_backward(std::span<const std::size_t> cells,
                                    std::span<const double> d_f, std::span<double> grad) const {
  nn::MlpCache cache;
  mlp_.forward(store_.data(), box_.coordinates(cells), &cache);
  mlp_.backward(store_.data(), cache, column_features(d_f), grad.data());
}

// ---------------------------------------------------------------------------
// Low-rank tensor function

LowRankRepr::LowRankRepr(const ReprSpec& spec, const VelocityGrid& m0, std::uint64_t seed)
    : Representation(spec, m0) {
  const auto& s = std::get<LowRankSpec>(spec.variant);
  require(s.depth > 0 && s.width > 0 && s.omega0 > 0.0, "invalid low-rank spec");
  const std::size_t half = std::max<std::size_t>(
      1, (m0.nx == 1 ? m0.nz : std::min(m0.nz, m0.nx)) / 2);
  r1_ = s.r1 ? s.r1 : half;
  r2_ = s.r2 ? s.r2 : half;
  const ActivationParams sine{Activation::Sine, s.omega0, 1.0};
  const ActivationParams linear{Activation::Identity, 1.0, 1.0};
  f1_ = nn::Mlp(store_, "lowrank.f1", hidden_dims(1, s.width, s.depth, r1_), sine, linear);
  f2_ = nn::Mlp(store_, "lowrank.f2", hidden_dims(1, s.width, s.depth, r2_), sine, linear);
  core_offset_ = store_.add("lowrank.core", r1_ * r2_);
  std::mt19937_64 rng(seed);
  nn::init_siren(f1_, params(), s.omega0, rng);
  nn::init_siren(f2_, params(), s.omega0, rng);
  for (std::size_t i = 0; i < std::min(r1_, r2_); ++i) {
    params()[core_offset_ + i * r2_ + i] = s.core_scale;
  }
}

namespace {

Matrix axis_coords(std::size_t n, const CoordinateBox& box, bool z_axis) {
  Matrix c(1, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) c(0, i) = z_axis ? box.z(i) : box.x(i);
  return c;
}

}  // namespace

Eigen::MatrixXd LowRankRepr::perturbation_grid() const {
  const Matrix a = f1_.forward(store_.data(), axis_coords(box_.nz, box_, true), nullptr);
  const Matrix b = f2_.forward(store_.data(), axis_coords(box_.nx, box_, false), nullptr);
  nn::RowMatrixMap core(store_.data() + core_offset_, r1_, r2_);
  return a.transpose() * core * b;
}

std::vector<double> LowRankRepr::perturbation(std::span<const std::size_t> cells) const {
  const Eigen::MatrixXd full = perturbation_grid();
  std::vector<double> f(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    f[j] = full(cells[j] / box_.nx, cells[j] % box_.nx);
  }
  return f;
}

void LowRankRepr::perturbation_backward(std::span<const std::size_t> cells,
                                        std::span<const double> d_f,
                                        std::span<double> grad) const {
  nn::MlpCache ca, cb;
  const Matrix a = f1_.forward(store_.data(), axis_coords(box_.nz, box_, true), &ca);
  const Matrix b = f2_.forward(store_.data(), axis_coords(box_.nx, box_, false), &cb);
  nn::RowMatrixMap core(store_.data() + core_offset_, r1_, r2_);
  // dF is a sparse nz x nx upstream; F = A^T C B.
  Eigen::MatrixXd d_full = Eigen::MatrixXd::Zero(box_.nz, box_.nx);
  for (std::size_t j = 0; j < cells.size(); ++j) {
    d_full(cells[j] / box_.nx, cells[j] % box_.nx) += d_f[j];
  }
  const Matrix d_a = core * (b * d_full.transpose());  // r1 x nz
  const Matrix d_b = core.transpose() * (a * d_full);  // r2 x nx
  nn::MutRowMatrixMap g_core(grad.data() + core_offset_, r1_, r2_);
  g_core.noalias() += a * d_full * b.transpose();
  f1_.backward(store_.data(), ca, d_a, grad.data());
  f2_.backward(store_.data(), cb, d_b, grad.data());
}

// ---------------------------------------------------------------------------
// Multiresolution hash encoding

HashEncoding::HashEncoding(nn::ParamStore& store, const std::string& prefix,
                           const HashGridSpec& spec, int dims)
    : features_(spec.features), table_size_(std::size_t{1} << spec.log2_table_size), dims_(dims) {
  validate_hash(spec);
  for (std::size_t l = 0; l < spec.levels; ++l) {
    Level lv;
    lv.resolution =
        std::floor(spec.base_resolution * std::pow(spec.per_level_scale, static_cast<double>(l)));
    lv.vertices_per_axis = static_cast<std::size_t>(lv.resolution) + 1;
    double dense_entries = 1.0;
    for (int d = 0; d < dims; ++d) dense_entries *= double(lv.vertices_per_axis);
    lv.dense = dense_entries <= double(table_size_);
    lv.table_entries = lv.dense ? static_cast<std::size_t>(dense_entries) : table_size_;
    lv.offset = store.add(prefix + ".level" + std::to_string(l), lv.table_entries * features_);
    levels_.push_back(lv);
  }
}

std::size_t HashEncoding::slot(const Level& level, std::span<const std::uint64_t> vertex) const {
  if (level.dense) {
    std::size_t idx = 0, stride = 1;
    for (int d = 0; d < dims_; ++d) {
      idx += static_cast<std::size_t>(vertex[d]) * stride;
      stride *= level.vertices_per_axis;
    }
    return idx;
  }
  std::uint64_t h = 0;
  for (int d = 0; d < dims_; ++d) h ^= vertex[d] * kHashPrimes[d];
  return static_cast<std::size_t>(h % table_size_);
}

template <typename Fn>
void HashEncoding::for_each_corner(const Level& level, const double* point, Fn&& fn) const {
  std::uint64_t base[2] = {0, 0};
  double frac[2] = {0.0, 0.0};
  const auto top = static_cast<std::uint64_t>(level.resolution);
  for (int d = 0; d < dims_; ++d) {
    const double u = std::clamp(0.5 * (point[d] + 1.0), 0.0, 1.0);
    const double p = u * level.resolution;
    auto i0 = static_cast<std::uint64_t>(std::floor(p));
    if (i0 >= top) i0 = top - 1;  // u == 1 interpolates on the last cell
    base[d] = i0;
    frac[d] = p - static_cast<double>(i0);
  }
  const int corners = 1 << dims_;
  std::uint64_t v[2];
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    for (int d = 0; d < dims_; ++d) {
      const bool hi = (c >> d) & 1;
      v[d] = base[d] + (hi ? 1 : 0);
      w *= hi ? frac[d] : 1.0 - frac[d];
    }
    fn(slot(level, {v, static_cast<std::size_t>(dims_)}), w);
  }
}

nn::Matrix HashEncoding::encode(const double* theta, const nn::Matrix& coords) const {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(output_dim()), coords.cols());
  for (Eigen::Index j = 0; j < coords.cols(); ++j) {
    const double* p = coords.col(j).data();
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const auto& lv = levels_[l];
      for_each_corner(lv, p, [&](std::size_t s, double w) {
        const double* e = theta + lv.offset + s * features_;
        for (std::size_t f = 0; f < features_; ++f) out(l * features_ + f, j) += w * e[f];
      });
    }
  }
  return out;
}

void HashEncoding::backward(const nn::Matrix& coords, const nn::Matrix& d_features,
                            double* grad) const {
  for (Eigen::Index j = 0; j < coords.cols(); ++j) {
    const double* p = coords.col(j).data();
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const auto& lv = levels_[l];
      for_each_corner(lv, p, [&](std::size_t s, double w) {
        double* e = grad + lv.offset + s * features_;
        for (std::size_t f = 0; f < features_; ++f) e[f] += w * d_features(l * features_ + f, j);
      });
    }
  }
}

void HashEncoding::init(std::span<double> theta, double bound, std::mt19937_64& rng) const {
  for (const auto& lv : levels_) {
    nn::init_uniform(theta, lv.offset, lv.table_entries * features_, bound, rng);
  }
}

// ---------------------------------------------------------------------------
// Hash grid with ReLU head

HashGridRepr::HashGridRepr(const ReprSpec& spec, const VelocityGrid& m0, std::uint64_t seed)
    : Representation(spec, m0) {
  const auto& s = std::get<HashGridSpec>(spec.variant);
  enc_ = HashEncoding(store_, "hash", s, box_.dims);
  head_ = nn::Mlp(store_, "hash.head", hidden_dims(enc_.output_dim(), s.head_width, s.head_depth, 1),
                  {Activation::Relu, 1.0, 1.0}, {Activation::Identity, 1.0, 1.0});
  std::mt19937_64 rng(seed);
  enc_.init(params(), s.table_init, rng);
  nn::init_relu(head_, params(), rng);
}

std::vector<double> HashGridRepr::perturbation(std::span<const std::size_t> cells) const {
  const Matrix h = enc_.encode(store_.data(), box_.coordinates(cells));
  return row_to_vector(head_.forward(store_.data(), h, nullptr));
}

void HashGridRepr::perturbation_backward(std::span<const std::size_t> cells,
                                         std::span<const double> d_f,
                                         std::span<double> grad) const {
  const Matrix coords = box_.coordinates(cells);
  nn::MlpCache cache;
  head_.forward(store_.data(), enc_.encode(store_.data(), coords), &cache);
  const Matrix dh = head_.backward(store_.data(), cache, column_features(d_f), grad.data());
  enc_.backward(coords, dh, grad.data());
}

// ---------------------------------------------------------------------------
// Hybrid INR + hash grid

HybridIgRepr::HybridIgRepr(const ReprSpec& spec, const VelocityGrid& m0, std::uint64_t seed)
    : Representation(spec, m0) {
  const auto& s = std::get<HybridIgSpec>(spec.variant);
  require(s.alpha >= 0.0 && s.alpha <= 1.0, "hybrid alpha must lie in [0, 1]");
  require(s.inr_width > 0 && s.inr_depth > 0 && s.omega0 > 0.0, "invalid hybrid INR spec");
  require(s.head_width > 0, "invalid hybrid head spec");
  require(std::isfinite(s.inr_gain) && s.inr_gain > 0.0, "hybrid INR gain must be positive");
  alpha_ = s.alpha;
  gain_ = s.inr_gain;
  enc_ = HashEncoding(store_, "ig.hash", s.hash, box_.dims);
  const std::size_t n_r = s.inr_features ? s.inr_features : enc_.output_dim();
  inr_ = nn::Mlp(store_, "ig.inr",
                 hidden_dims(static_cast<std::size_t>(box_.dims), s.inr_width, s.inr_depth, n_r),
                 {Activation::Sine, s.omega0, 1.0}, {Activation::Identity, 1.0, 1.0});
  head_ = nn::Mlp(store_, "ig.head",
                  hidden_dims(enc_.output_dim() + n_r, s.head_width, s.head_depth, 1),
                  {Activation::Relu, 1.0, 1.0}, {Activation::Identity, 1.0, 1.0});
  std::mt19937_64 rng(seed);
  enc_.init(params(), s.hash.table_init, rng);
  nn::init_siren(inr_, params(), s.omega0, rng);
  nn::init_relu(head_, params(), rng);
}

nn::Matrix HybridIgRepr::fused_features(std::span<const std::size_t> cells) const {
  const Matrix coords = box_.coordinates(cells);
  const Matrix h = enc_.encode(store_.data(), coords);
  const Matrix r = inr_.forward(store_.data(), coords, nullptr);
  Matrix v(h.rows() + r.rows(), coords.cols());
  v.topRows(h.rows()) = std::sqrt(alpha_) * h;
  v.bottomRows(r.rows()) = std::sqrt(1.0 - alpha_) * gain_ * r;
  return v;
}

std::vector<double> HybridIgRepr::perturbation(std::span<const std::size_t> cells) const {
  return row_to_vector(head_.forward(store_.data(), fused_features(cells), nullptr));
}

void HybridIgRepr::perturbation_backward(std::span<const std::size_t> cells,
                                         std::span<const double> d_f,
                                         std::span<double> grad) const {
  const Matrix coords = box_.coordinates(cells);
  const Matrix h = enc_.encode(store_.data(), coords);
  nn::MlpCache inr_cache, head_cache;
  const Matrix r = inr_.forward(store_.data(), coords, &inr_cache);
  Matrix v(h.rows() + r.rows(), coords.cols());
  const double sa = std::sqrt(alpha_), sb = std::sqrt(1.0 - alpha_) * gain_;
  v.topRows(h.rows()) = sa * h;
  v.bottomRows(r.rows()) = sb * r;
  head_.forward(store_.data(), v, &head_cache);
  const Matrix dv = head_.backward(store_.data(), head_cache, column_features(d_f), grad.data());
  if (sa != 0.0) enc_.backward(coords, sa * dv.topRows(h.rows()), grad.data());
  if (sb != 0.0) inr_.backward(store_.data(), inr_cache, sb * dv.bottomRows(r.rows()), grad.data());
}

// ---------------------------------------------------------------------------

std::unique_ptr<Representation> init_repr(const ReprSpec& spec, const VelocityGrid& m0,
                                          std::uint64_t seed) {
  return std::visit(
      [&](const auto& v) -> std::unique_ptr<Representation> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DirectGridSpec>) {
          return std::make_unique<DirectGridRepr>(spec, m0);
        } else if constexpr (std::is_same_v<T, LowRankSpec>) {
          return std::make_unique<LowRankRepr>(spec, m0, seed);
        } else if constexpr (std::is_same_v<T, HashGridSpec>) {
          return std::make_unique<HashGridRepr>(spec, m0, seed);
        } else if constexpr (std::is_same_v<T, HybridIgSpec>) {
          return std::make_unique<HybridIgRepr>(spec, m0, seed);
        } else {
          return std::make_unique<MlpRepr>(spec, m0, seed);
        }
      },
      spec.variant);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const Representation& repr, const std::string& path) {
  const auto p = repr.params();
  std::vector<std::uint8_t> blob(p.size() * sizeof(double));
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(p[i]);
    for (int b = 0; b < 8; ++b) blob[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  write_file_atomic(path + ".bin", blob);
  std::ostringstream man;
  man << "# " << repr_name(repr.spec()) << " " << p.size() << "\n";
  for (const auto& s : repr.segments()) man << s.name << ' ' << s.offset << ' ' << s.length << '\n';
  write_text_atomic(path + ".manifest", man.str());
}

void load_checkpoint(Representation& repr, const std::string& path) {
  std::ifstream man(path + ".manifest");
  if (!man) throw FormatError("cannot open checkpoint manifest " + path + ".manifest");
  std::string line;
  std::size_t k = 0;
  const auto& segs = repr.segments();
  while (std::getline(man, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string name;
    std::size_t off = 0, len = 0;
    if (!(is >> name >> off >> len)) throw FormatError("malformed manifest line: " + line);
    if (k >= segs.size() || segs[k].name != name || segs[k].offset != off ||
        segs[k].length != len) {
      throw FormatError("checkpoint segment '" + name + "' does not match the architecture");
    }
    ++k;
  }
  if (k != segs.size()) throw FormatError("checkpoint manifest is missing segments");

  std::ifstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw FormatError("cannot open checkpoint blob " + path + ".bin");
  std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  auto p = repr.params();
  if (blob.size() != p.size() * 8) throw FormatError("checkpoint blob size mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= std::uint64_t(static_cast<unsigned char>(blob[i * 8 + b])) << (8 * b);
    }
    const double v = std::bit_cast<double>(bits);
    if (!std::isfinite(v)) throw FormatError("checkpoint holds a non-finite value");
    p[i] = v;
  }
}

}  // namespace crfwi
