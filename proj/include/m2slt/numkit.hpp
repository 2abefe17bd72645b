#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace m2slt {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  void fill(double value);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a·bᵀ without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
void add_in_place(Matrix& target, const Matrix& delta);
// Mean over rows, as a 1×cols matrix.
Matrix mean_rows(const Matrix& m);
double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);

Matrix softmax_rows(const Matrix& m, double temperature = 1.0);

inline constexpr double kCosineEps = 1e-8;
// Entry (i, j) is a_i·b_j / (|a_i| |b_j| + 1e-8).
Matrix cosine_similarity(const Matrix& a, const Matrix& b);

// Seeded generator. Conversions to real values are spelled out here rather
// than left to the <random> distributions, whose output is implementation
// defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  // Poisson-distributed count with the given mean (Knuth for small means).
  std::size_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Learnable tensor with its accumulated gradient and optimizer state.
struct Param {
  Matrix value;
  Matrix grad;
  Matrix velocity;

  Param() = default;
  explicit Param(Matrix v);
  void zero_grad();
};

using ParamList = std::vector<std::pair<std::string, Param*>>;

enum class Activation { identity, relu };

struct DenseLayer {
  Param weight;  // in × out
  Param bias;    // 1 × out
  Activation activation = Activation::identity;
};

struct MlpTape;

struct MlpGradients {
  Matrix grad_in;
  std::vector<Matrix> weight;
  std::vector<Matrix> bias;
};

// Multi-layer perceptron; hidden layers use relu, the final layer identity.
class Mlp {
 public:
  Mlp();
  // dims = {in, hidden..., out}. Weights are Glorot-uniform, biases zero.
  Mlp(const std::vector<std::size_t>& dims, Rng& rng);
  explicit Mlp(std::vector<DenseLayer> layers);

  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::uint64_t id() const { return id_; }

  void register_params(const std::string& prefix, ParamList& out);
  void accumulate(const MlpGradients& grads);

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t id_;
};

// Activations recorded by mlp_forward; consumed by mlp_backward.
struct MlpTape {
  std::uint64_t net_id = 0;
  std::vector<Matrix> inputs;   // input to each layer
  std::vector<Matrix> outputs;  // post-activation output of each layer
};

Matrix mlp_forward(const Mlp& net, const Matrix& x, MlpTape* tape = nullptr);
MlpGradients mlp_backward(const Mlp& net, const MlpTape& tape, const Matrix& grad_out);
// Backward pass that skips parameter gradients and only returns grad_in.
Matrix mlp_backward_input(const Mlp& net, const MlpTape& tape, const Matrix& grad_out);

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct SgdConfig {
  double lr0 = 0.01;
  std::size_t total_steps = 1;
  double momentum = 0.0;
};

void validate(const SgdConfig& cfg);
double cosine_annealed_lr(std::size_t step, const SgdConfig& cfg);
void sgd_step(std::span<Param* const> params, std::size_t step, const SgdConfig& cfg);
void sgd_step(const ParamList& params, std::size_t step, const SgdConfig& cfg);
void zero_grads(const ParamList& params);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Relative error used by the gradient checker: |a - n| / max(|a|, |n|, floor).
double gradient_rel_error(double analytic, double numeric, double floor = 1e-6);

// Compares Param::grad against central differences of `loss`, which must
// re-evaluate the full objective from the current parameter values.
GradCheckResult check_gradients(const ParamList& params, const std::function<double()>& loss,
                                double h = 1e-4);

}  // namespace m2slt
