#include "m2slt/numkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "m2slt/error.hpp"

namespace m2slt {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ArgumentError("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ArgumentError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                        shape_string(b));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ArgumentError("matmul: inner dimension mismatch " + shape_string(a) + " x " +
                        shape_string(b));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix out(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ArgumentError("matmul_tn: row mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  Matrix out(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = pa + p * n;
    const double* brow = pb + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = po + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ArgumentError("matmul_nt: column mismatch " + shape_string(a) + " vs " +
                        shape_string(b));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix scale(const Matrix& m, double s) {
  Matrix out = m;
  for (double& v : out.data()) v *= s;
  return out;
}

void add_in_place(Matrix& target, const Matrix& delta) {
  require_same_shape(target, delta, "add_in_place");
  for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] += delta.data()[i];
}

Matrix mean_rows(const Matrix& m) {
  if (m.rows() == 0) throw ArgumentError("mean_rows: empty matrix");
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  const double inv = 1.0 / static_cast<double>(m.rows());
  for (double& v : out.data()) v *= inv;
  return out;
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.data()) best = std::max(best, std::abs(v));
  return best;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

Matrix softmax_rows(const Matrix& m, double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("softmax_rows: temperature must be positive");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp((in[j] - mx) / temperature);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

Matrix cosine_similarity(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ArgumentError("cosine_similarity: dimension mismatch " + shape_string(a) + " vs " +
                        shape_string(b));
  }
  std::vector<double> nb(b.rows());
  for (std::size_t j = 0; j < b.rows(); ++j) {
    double s = 0.0;
    for (double v : b.row(j)) s += v * v;
    nb[j] = std::sqrt(s);
  }
  Matrix dots = matmul_nt(a, b);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += v * v;
    const double na = std::sqrt(s);
    for (std::size_t j = 0; j < b.rows(); ++j) dots(i, j) /= na * nb[j] + kCosineEps;
  }
  return dots;
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ArgumentError("Rng::below: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = uniform(-1.0, 1.0);
    v = uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::size_t Rng::poisson(double mean) {
  if (mean <= 0.0) return 0;
  if (mean > 30.0) {
    const double x = std::round(mean + std::sqrt(mean) * normal());
    return x < 0.0 ? 0 : static_cast<std::size_t>(x);
  }
  const double limit = std::exp(-mean);
  std::size_t k = 0;
  double p = uniform();
  while (p > limit) {
    ++k;
    p *= uniform();
  }
  return k;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ (index + 1) * 0xD1B54A32D192ED03ULL);
}

Param::Param(Matrix v)
    : value(std::move(v)),
      grad(value.rows(), value.cols()),
      velocity(value.rows(), value.cols()) {}

void Param::zero_grad() { grad.fill(0.0); }

namespace {

std::uint64_t next_mlp_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

}  // namespace

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-s, s);
  return w;
}

Mlp::Mlp() : id_(next_mlp_id()) {}

Mlp::Mlp(const std::vector<std::size_t>& dims, Rng& rng) : id_(next_mlp_id()) {
  if (dims.size() < 2) throw ArgumentError("Mlp: need at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw ArgumentError("Mlp: zero-width layer");
    DenseLayer layer;
    layer.weight = Param(glorot_uniform(dims[i], dims[i + 1], rng));
    layer.bias = Param(Matrix(1, dims[i + 1]));
    layer.activation = i + 2 == dims.size() ? Activation::identity : Activation::relu;
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)), id_(next_mlp_id()) {
  if (layers_.empty()) throw ArgumentError("Mlp: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.value.rows() != 1 || l.bias.value.cols() != l.weight.value.cols())
      throw ArgumentError("Mlp: bias shape does not match weight");
    if (i > 0 && layers_[i - 1].weight.value.cols() != l.weight.value.rows())
      throw ArgumentError("Mlp: layer dimensions do not chain");
  }
}

Mlp::Mlp(const Mlp& other) : layers_(other.layers_), id_(next_mlp_id()) {}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    layers_ = other.layers_;
    id_ = next_mlp_id();
  }
  return *this;
}

std::size_t Mlp::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().weight.value.rows();
}

std::size_t Mlp::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().weight.value.cols();
}

void Mlp::register_params(const std::string& prefix, ParamList& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    out.emplace_back(base + ".weight", &layers_[i].weight);
    out.emplace_back(base + ".bias", &layers_[i].bias);
  }
}

void Mlp::accumulate(const MlpGradients& grads) {
  if (grads.weight.size() != layers_.size() || grads.bias.size() != layers_.size())
    throw ArgumentError("Mlp::accumulate: gradient structure mismatch");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    add_in_place(layers_[i].weight.grad, grads.weight[i]);
    add_in_place(layers_[i].bias.grad, grads.bias[i]);
  }
}

Matrix mlp_forward(const Mlp& net, const Matrix& x, MlpTape* tape) {
  if (x.cols() != net.input_dim()) {
    throw ArgumentError("mlp_forward: input has " + std::to_string(x.cols()) +
                        " columns, network expects " + std::to_string(net.input_dim()));
  }
  if (tape) {
    tape->net_id = net.id();
    tape->inputs.clear();
    tape->outputs.clear();
  }
  Matrix h = x;
  for (const auto& layer : net.layers()) {
    Matrix z = matmul(h, layer.weight.value);
    const auto& b = layer.bias.value;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto r = z.row(i);
      for (std::size_t j = 0; j < z.cols(); ++j) {
        r[j] += b(0, j);
        if (layer.activation == Activation::relu && r[j] < 0.0) r[j] = 0.0;
      }
    }
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->outputs.push_back(z);
    }
    h = std::move(z);
  }
  return h;
}

namespace {

void check_tape(const Mlp& net, const MlpTape& tape, const Matrix& grad_out) {
  if (tape.net_id != net.id() || tape.inputs.size() != net.layers().size() ||
      tape.outputs.size() != net.layers().size()) {
    throw StateError("mlp_backward: tape was not produced by this network");
  }
  if (!grad_out.same_shape(tape.outputs.back())) {
    throw ArgumentError("mlp_backward: grad_out shape " + shape_string(grad_out) +
                        " does not match output " + shape_string(tape.outputs.back()));
  }
}

// Gradient w.r.t. the pre-activation of layer i.
Matrix pre_activation_grad(const DenseLayer& layer, const Matrix& output, Matrix grad) {
  if (layer.activation == Activation::relu) {
    for (std::size_t k = 0; k < grad.size(); ++k)
      if (output.data()[k] <= 0.0) grad.data()[k] = 0.0;
  }
  return grad;
}

}  // namespace

MlpGradients mlp_backward(const Mlp& net, const MlpTape& tape, const Matrix& grad_out) {
  check_tape(net, tape, grad_out);
  const std::size_t n = net.layers().size();
  MlpGradients g;
  g.weight.resize(n);
  g.bias.resize(n);
  Matrix grad = grad_out;
  for (std::size_t li = n; li-- > 0;) {
    const auto& layer = net.layers()[li];
    Matrix dz = pre_activation_grad(layer, tape.outputs[li], std::move(grad));
    g.weight[li] = matmul_tn(tape.inputs[li], dz);
    Matrix db(1, dz.cols());
    for (std::size_t i = 0; i < dz.rows(); ++i)
      for (std::size_t j = 0; j < dz.cols(); ++j) db(0, j) += dz(i, j);
    g.bias[li] = std::move(db);
    grad = matmul_nt(dz, layer.weight.value);
  }
  g.grad_in = std::move(grad);
  return g;
}

Matrix mlp_backward_input(const Mlp& net, const MlpTape& tape, const Matrix& grad_out) {
  check_tape(net, tape, grad_out);
  Matrix grad = grad_out;
  for (std::size_t li = net.layers().size(); li-- > 0;) {
    const auto& layer = net.layers()[li];
    Matrix dz = pre_activation_grad(layer, tape.outputs[li], std::move(grad));
    grad = matmul_nt(dz, layer.weight.value);
  }
  return grad;
}

void validate(const SgdConfig& cfg) {
  if (!(cfg.lr0 > 0.0)) throw ConfigError("sgd: lr0 must be positive");
  if (cfg.total_steps < 1) throw ConfigError("sgd: total_steps must be at least 1");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("sgd: momentum must lie in [0, 1)");
}

double cosine_annealed_lr(std::size_t step, const SgdConfig& cfg) {
  validate(cfg);
  if (step >= cfg.total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void sgd_step(std::span<Param* const> params, std::size_t step, const SgdConfig& cfg) {
  for (const Param* p : params) {
    if (!p->grad.same_shape(p->value)) {
      throw ArgumentError("sgd_step: gradient shape " + shape_string(p->grad) +
                          " does not match parameter " + shape_string(p->value));
    }
  }
  const double lr = cosine_annealed_lr(step, cfg);
  for (Param* p : params) {
    auto& value = p->value.data();
    const auto& grad = p->grad.data();
    if (cfg.momentum > 0.0) {
      if (!p->velocity.same_shape(p->value)) p->velocity = Matrix(p->value.rows(), p->value.cols());
      auto& vel = p->velocity.data();
      for (std::size_t i = 0; i < value.size(); ++i) {
        vel[i] = cfg.momentum * vel[i] + grad[i];
        value[i] -= lr * vel[i];
      }
    } else {
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
    }
  }
}

void sgd_step(const ParamList& params, std::size_t step, const SgdConfig& cfg) {
  std::vector<Param*> ptrs;
  ptrs.reserve(params.size());
  for (const auto& [name, p] : params) ptrs.push_back(p);
  sgd_step(std::span<Param* const>(ptrs), step, cfg);
}

void zero_grads(const ParamList& params) {
  for (const auto& [name, p] : params) p->zero_grad();
}

double gradient_rel_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const ParamList& params, const std::function<double()>& loss,
                                double h) {
  GradCheckResult result;
  for (const auto& [name, p] : params) {
    auto& values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss();
      values[i] = saved - h;
      const double down = loss();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.data()[i];
      const double err = gradient_rel_error(analytic, numeric);
      ++result.checked;
      if (err > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        if (err >= result.max_rel_error) {
          result.worst_param = name;
          result.worst_index = i;
          result.analytic = analytic;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace m2slt
