#include "m2slt/mir.hpp"

#include <algorithm>
#include <numeric>

#include "m2slt/error.hpp"

namespace m2slt {

MemoryPool::MemoryPool(std::size_t feature_dim, const MirConfig& cfg, Rng& rng)
    : memory(glorot_uniform(cfg.n_slots, cfg.d_mem, rng)),
      enc({feature_dim, cfg.hidden, cfg.d_mem}, rng),
      dec({cfg.d_mem, cfg.hidden, feature_dim}, rng),
      alpha(Matrix(1, 1, 0.0)),
      k(cfg.k) {
  check();
}

void MemoryPool::check() const {
  if (k < 1 || k > n_slots())
    throw ConfigError("MiR: k must lie in [1, n_slots], got " + std::to_string(k));
  if (enc.output_dim() != d_mem() || dec.input_dim() != d_mem())
    throw ConfigError("MiR: enc/dec dimensions do not match the memory width");
  if (dec.output_dim() != enc.input_dim())
    throw ConfigError("MiR: dec output must match the feature dimension");
}

void MemoryPool::register_params(ParamList& out) {
  out.emplace_back("mir.memory", &memory);
  enc.register_params("mir.enc", out);
  dec.register_params("mir.dec", out);
  out.emplace_back("mir.alpha", &alpha);
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) throw ArgumentError("top_k_indices: k exceeds candidate count");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

MirRetrieval mir_retrieve(const Matrix& features, const MemoryPool& pool) {
  if (features.cols() != pool.feature_dim()) {
    throw ArgumentError("mir_retrieve: features have " + std::to_string(features.cols()) +
                        " columns, pool expects " + std::to_string(pool.feature_dim()));
  }
  const Matrix z = mlp_forward(pool.enc, features);
  const Matrix sim = cosine_similarity(z, pool.memory.value);
  MirRetrieval out;
  out.retrieved = Matrix(features.rows(), pool.d_mem());
  out.indices.reserve(features.rows());
  const double inv_k = 1.0 / static_cast<double>(pool.k);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto idx = top_k_indices(sim.row(i), pool.k);
    auto dst = out.retrieved.row(i);
    for (std::size_t slot : idx) {
      const auto src = pool.memory.value.row(slot);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    for (double& v : dst) v *= inv_k;
    out.indices.push_back(std::move(idx));
  }
  return out;
}

Matrix mir_enhance(const Matrix& features, const MemoryPool& pool, MirTrace* trace) {
  MirTrace local;
  MirTrace& tr = trace ? *trace : local;
  tr.retrieval = mir_retrieve(features, pool);
  tr.decoded = mlp_forward(pool.dec, tr.retrieval.retrieved, trace ? &tr.dec_tape : nullptr);
  const double a = pool.alpha_value();
  Matrix out = features;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += a * tr.decoded.data()[i];
  return out;
}

Matrix mir_enhance_backward(MemoryPool& pool, const MirTrace& trace, const Matrix& grad_out) {
  if (!grad_out.same_shape(trace.decoded))
    throw ArgumentError("mir_enhance_backward: gradient shape mismatch");
  double d_alpha = 0.0;
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    d_alpha += grad_out.data()[i] * trace.decoded.data()[i];
  pool.alpha.grad(0, 0) += d_alpha;

  const Matrix d_decoded = scale(grad_out, pool.alpha_value());
  MlpGradients g = mlp_backward(pool.dec, trace.dec_tape, d_decoded);
  pool.dec.accumulate(g);

  const double inv_k = 1.0 / static_cast<double>(pool.k);
  for (std::size_t i = 0; i < g.grad_in.rows(); ++i) {
    const auto d_row = g.grad_in.row(i);
    for (std::size_t slot : trace.retrieval.indices[i]) {
      auto m_grad = pool.memory.grad.row(slot);
      for (std::size_t j = 0; j < m_grad.size(); ++j) m_grad[j] += d_row[j] * inv_k;
    }
  }
  // Identity path of the residual; enc only feeds the ranking.
  return grad_out;
}

Matrix mir_fuse(const Matrix& f_rgb_hat, const Matrix& f_evt_hat, const MemoryPool& pool,
                bool recurrent, std::size_t recurrent_passes, MirFuseTrace* trace) {
  if (!f_rgb_hat.same_shape(f_evt_hat)) {
    throw ArgumentError("mir_fuse: shape mismatch " + shape_string(f_rgb_hat) + " vs " +
                        shape_string(f_evt_hat));
  }
  Matrix out = add(f_rgb_hat, f_evt_hat);
  if (trace) trace->passes.clear();
  if (!recurrent) return out;
  for (std::size_t pass = 0; pass < recurrent_passes; ++pass) {
    if (trace) {
      trace->passes.emplace_back();
      out = mir_enhance(out, pool, &trace->passes.back());
    } else {
      out = mir_enhance(out, pool);
    }
  }
  return out;
}

Matrix mir_fuse_backward(MemoryPool& pool, const MirFuseTrace& trace, const Matrix& grad_out) {
  Matrix grad = grad_out;
  for (std::size_t i = trace.passes.size(); i-- > 0;)
    grad = mir_enhance_backward(pool, trace.passes[i], grad);
  return grad;
}

}  // namespace m2slt
