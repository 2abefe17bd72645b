#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "m2slt/numkit.hpp"

namespace m2slt {

struct MirConfig {
  std::size_t n_slots = 128;
  std::size_t d_mem = 512;
  std::size_t hidden = 512;
  std::size_t k = 3;
};

// Shared micro-sign memory. enc maps features into memory space, dec maps the
// averaged top-k slots back; alpha scales the residual and starts at zero.
struct MemoryPool {
  Param memory;  // n_slots × d_mem
  Mlp enc;       // D → hidden → d_mem
  Mlp dec;       // d_mem → hidden → D
  Param alpha;   // 1 × 1
  std::size_t k = 3;

  MemoryPool() = default;
  MemoryPool(std::size_t feature_dim, const MirConfig& cfg, Rng& rng);

  std::size_t n_slots() const { return memory.value.rows(); }
  std::size_t d_mem() const { return memory.value.cols(); }
  std::size_t feature_dim() const { return enc.input_dim(); }
  double alpha_value() const { return alpha.value(0, 0); }

  void check() const;
  // Names: mir.memory, mir.enc.*, mir.dec.*, mir.alpha.
  void register_params(ParamList& out);
};

struct MirRetrieval {
  Matrix retrieved;                          // L × d_mem
  std::vector<std::vector<std::size_t>> indices;  // L rows of k slot ids, best first
};

// Per-row top-k slots by cosine similarity (ties to the lower slot id).
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

MirRetrieval mir_retrieve(const Matrix& features, const MemoryPool& pool);

struct MirTrace {
  MirRetrieval retrieval;
  MlpTape dec_tape;
  Matrix decoded;  // dec(retrieved)
};

// F + alpha · dec(mean of top-k memory rows), computed per timestep.
Matrix mir_enhance(const Matrix& features, const MemoryPool& pool, MirTrace* trace = nullptr);
// Accumulates gradients into pool (dec, alpha and the selected memory rows)
// and returns the gradient w.r.t. the input features. The ranking is treated
// as constant, so enc receives no gradient.
Matrix mir_enhance_backward(MemoryPool& pool, const MirTrace& trace, const Matrix& grad_out);

struct MirFuseTrace {
  std::vector<MirTrace> passes;
};

// F̂_rgb + F̂_evt, followed by `recurrent_passes` enhancement passes when recurrent is set.
Matrix mir_fuse(const Matrix& f_rgb_hat, const Matrix& f_evt_hat, const MemoryPool& pool,
                bool recurrent, std::size_t recurrent_passes = 1, MirFuseTrace* trace = nullptr);
// Returns the gradient w.r.t. the summed input (identical for both branches).
Matrix mir_fuse_backward(MemoryPool& pool, const MirFuseTrace& trace, const Matrix& grad_out);

}  // namespace m2slt
