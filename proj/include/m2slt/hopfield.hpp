#pragma once

#include <cstddef>
#include <vector>

#include "m2slt/numkit.hpp"
#include "m2slt/prototype.hpp"

namespace m2slt {

struct MarConfig {
  std::size_t hidden = 512;
  double beta_h = 8.0;
  std::size_t iterations = 1;
};

// Projections around the Hopfield lookup. beta scales the residual and starts at zero.
struct MarParams {
  Mlp enc;     // D → hidden → D_enc
  Mlp dec;     // D_enc → hidden → D
  Param beta;  // 1 × 1
  double beta_h = 8.0;
  std::size_t iterations = 1;

  MarParams() = default;
  MarParams(std::size_t feature_dim, std::size_t pattern_dim, const MarConfig& cfg, Rng& rng);

  double beta_value() const { return beta.value(0, 0); }
  void check() const;
  // Names: mar.enc.*, mar.dec.*, mar.beta.
  void register_params(ParamList& out);
};

// softmax(beta_h · queries · patternsᵀ) row by row.
Matrix hopfield_attention(const Matrix& queries, const Matrix& patterns, double beta_h);

struct HopfieldTrace {
  std::vector<Matrix> attention;  // one L × C matrix per iteration
};

// ξ ← Xᵀ softmax(beta_h X ξ), applied `iterations` times to every query row.
Matrix hopfield_retrieve(const Matrix& queries, const Matrix& patterns, double beta_h,
                         std::size_t iterations, HopfieldTrace* trace = nullptr);
Matrix hopfield_retrieve(const Matrix& queries, const PrototypeSet& patterns, double beta_h,
                         std::size_t iterations);
// Gradient w.r.t. the queries; patterns are constants.
Matrix hopfield_backward(const Matrix& patterns, double beta_h, const HopfieldTrace& trace,
                         const Matrix& grad_out);

struct MarTrace {
  MlpTape enc_tape;
  HopfieldTrace hopfield;
  MlpTape dec_tape;
  Matrix decoded;
};

// F + beta · dec(hopfield(enc(F); prototypes)).
Matrix mar_enhance(const Matrix& features, const PrototypeSet& prototypes, const MarParams& params,
                   MarTrace* trace = nullptr);
Matrix mar_enhance_backward(MarParams& params, const PrototypeSet& prototypes,
                            const MarTrace& trace, const Matrix& grad_out);

}  // namespace m2slt
