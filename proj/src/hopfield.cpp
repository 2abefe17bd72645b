#include "m2slt/hopfield.hpp"

#include "m2slt/error.hpp"

namespace m2slt {

MarParams::MarParams(std::size_t feature_dim, std::size_t pattern_dim, const MarConfig& cfg,
                     Rng& rng)
    : enc({feature_dim, cfg.hidden, pattern_dim}, rng),
      dec({pattern_dim, cfg.hidden, feature_dim}, rng),
      beta(Matrix(1, 1, 0.0)),
      beta_h(cfg.beta_h),
      iterations(cfg.iterations) {
  check();
}

void MarParams::check() const {
  if (!(beta_h > 0.0)) throw ConfigError("MaR: beta_h must be positive");
  if (iterations < 1) throw ConfigError("MaR: iterations must be >= 1");
  if (enc.output_dim() != dec.input_dim() || dec.output_dim() != enc.input_dim())
    throw ConfigError("MaR: enc/dec dimensions do not chain");
}

void MarParams::register_params(ParamList& out) {
  enc.register_params("mar.enc", out);
  dec.register_params("mar.dec", out);
  out.emplace_back("mar.beta", &beta);
}

Matrix hopfield_attention(const Matrix& queries, const Matrix& patterns, double beta_h) {
  if (patterns.rows() == 0) throw RetrievalError("hopfield: empty prototype set");
  if (queries.cols() != patterns.cols()) {
    throw ArgumentError("hopfield: query dim " + std::to_string(queries.cols()) +
                        " differs from prototype dim " + std::to_string(patterns.cols()));
  }
  if (!(beta_h > 0.0)) throw ArgumentError("hopfield: beta_h must be positive");
  Matrix scores = matmul_nt(queries, patterns);
  for (double& v : scores.data()) v *= beta_h;
  return softmax_rows(scores);
}

Matrix hopfield_retrieve(const Matrix& queries, const Matrix& patterns, double beta_h,
                         std::size_t iterations, HopfieldTrace* trace) {
  if (iterations < 1) throw ArgumentError("hopfield: iterations must be >= 1");
  if (trace) trace->attention.clear();
  Matrix state = queries;
  for (std::size_t it = 0; it < iterations; ++it) {
    Matrix attn = hopfield_attention(state, patterns, beta_h);
    state = matmul(attn, patterns);
    if (trace) trace->attention.push_back(std::move(attn));
  }
  return state;
}

Matrix hopfield_retrieve(const Matrix& queries, const PrototypeSet& patterns, double beta_h,
                         std::size_t iterations) {
  return hopfield_retrieve(queries, patterns.prototypes, beta_h, iterations);
}

Matrix hopfield_backward(const Matrix& patterns, double beta_h, const HopfieldTrace& trace,
                         const Matrix& grad_out) {
  Matrix grad = grad_out;
  for (std::size_t it = trace.attention.size(); it-- > 0;) {
    const Matrix& a = trace.attention[it];
    // state_out = A X, A = softmax(beta_h · state_in Xᵀ)
    const Matrix d_attn = matmul_nt(grad, patterns);
    Matrix d_scores(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) dot += d_attn(i, j) * a(i, j);
      for (std::size_t j = 0; j < a.cols(); ++j)
        d_scores(i, j) = beta_h * a(i, j) * (d_attn(i, j) - dot);
    }
    grad = matmul(d_scores, patterns);
  }
  return grad;
}

Matrix mar_enhance(const Matrix& features, const PrototypeSet& prototypes, const MarParams& params,
                   MarTrace* trace) {
  if (features.cols() != params.enc.input_dim()) {
    throw ArgumentError("mar_enhance: features have " + std::to_string(features.cols()) +
                        " columns, MaR expects " + std::to_string(params.enc.input_dim()));
  }
  MarTrace local;
  MarTrace& tr = trace ? *trace : local;
  const Matrix q = mlp_forward(params.enc, features, trace ? &tr.enc_tape : nullptr);
  const Matrix retrieved = hopfield_retrieve(q, prototypes.prototypes, params.beta_h,
                                             params.iterations, trace ? &tr.hopfield : nullptr);
  tr.decoded = mlp_forward(params.dec, retrieved, trace ? &tr.dec_tape : nullptr);
  const double b = params.beta_value();
  Matrix out = features;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b * tr.decoded.data()[i];
  return out;
}

Matrix mar_enhance_backward(MarParams& params, const PrototypeSet& prototypes,
                            const MarTrace& trace, const Matrix& grad_out) {
  if (!grad_out.same_shape(trace.decoded))
    throw ArgumentError("mar_enhance_backward: gradient shape mismatch");
  double d_beta = 0.0;
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    d_beta += grad_out.data()[i] * trace.decoded.data()[i];
  params.beta.grad(0, 0) += d_beta;

  MlpGradients gd = mlp_backward(params.dec, trace.dec_tape, scale(grad_out, params.beta_value()));
  params.dec.accumulate(gd);
  const Matrix d_query =
      hopfield_backward(prototypes.prototypes, params.beta_h, trace.hopfield, gd.grad_in);
  MlpGradients ge = mlp_backward(params.enc, trace.enc_tape, d_query);
  params.enc.accumulate(ge);
  return add(grad_out, ge.grad_in);
}

}  // namespace m2slt
