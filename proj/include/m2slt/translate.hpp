#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "m2slt/checkpoint.hpp"
#include "m2slt/event_core.hpp"
#include "m2slt/hopfield.hpp"
#include "m2slt/mir.hpp"
#include "m2slt/numkit.hpp"
#include "m2slt/prototype.hpp"

namespace m2slt {

inline constexpr int kBos = 0;
inline constexpr int kEos = 1;
inline constexpr int kPad = 2;
inline constexpr int kUnk = 3;
inline constexpr int kFirstSymbol = 4;

class Vocab {
 public:
  // Reserved ids 0..3 are added in front of `symbols`.
  explicit Vocab(const std::vector<std::string>& symbols);
  // Symbols "w4", "w5", ... up to a total of `size` entries.
  static Vocab synthetic(std::size_t size);

  std::size_t size() const { return names_.size(); }
  const std::string& token(int id) const;
  int id(const std::string& token) const;  // kUnk when unknown
  std::string render(const TokenSequence& tokens) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

struct DecoderConfig {
  std::size_t emb_dim = 16;
  std::size_t hidden = 128;
  std::size_t layers = 1;
};

// Ablation switches; all off gives the plain encoder + decoder baseline.
struct AblationSwitches {
  bool mir_micro = true;
  bool mir_recurrent = true;
  bool mar = true;
};

struct ModelConfig {
  std::size_t feature_dim = 64;
  std::size_t frame_interval = 4;
  std::size_t max_frames = 64;
  std::size_t encoder_hidden = 64;
  std::size_t vocab_size = 30;
  std::size_t max_decode_len = 32;
  MirConfig mir;
  std::size_t recurrent_passes = 1;
  MarConfig mar;
  DecoderConfig decoder;
  AblationSwitches ablation;
};

void validate(const ModelConfig& cfg);

std::vector<std::size_t> sampled_frame_indices(std::size_t frames, const ModelConfig& cfg);
FrameSequence sample_frames(const FrameSequence& frames, const ModelConfig& cfg);

// Pooled descriptors per frame through the shared encoder MLP.
Matrix visual_encode(const FrameSequence& frames, const Mlp& encoder);

Matrix fuse(const Matrix& f_micro, const Matrix& f_evt_macro, const Matrix& f_rgb_macro);

// Mean-pooled visual context concatenated with the previous-token embedding,
// mapped to vocabulary logits by an MLP.
struct TextDecoder {
  Param embedding;  // |V| × emb_dim
  Mlp mlp;          // (D + emb_dim) → hidden^layers → |V|

  TextDecoder() = default;
  TextDecoder(std::size_t feature_dim, std::size_t vocab_size, const DecoderConfig& cfg, Rng& rng);

  std::size_t vocab_size() const { return embedding.value.rows(); }
  std::size_t context_dim() const { return mlp.input_dim() - embedding.value.cols(); }
  // Names: dec.embedding, dec.mlp.*.
  void register_params(ParamList& out);
};

struct DecodeTrace {
  std::size_t context_rows = 0;
  std::vector<int> previous;
  std::vector<int> targets;
  MlpTape tape;
  Matrix probs;
};

struct DecodeResult {
  double loss = 0.0;
  Matrix logits;  // (|target| + 1) × |V|
};

// Teacher-forced NLL summed over the target tokens and the closing eos.
DecodeResult decode_loss(const Matrix& fused, const TokenSequence& target,
                         const TextDecoder& decoder, DecodeTrace* trace = nullptr);
// Accumulates decoder gradients and returns the gradient w.r.t. `fused`.
Matrix decode_loss_backward(TextDecoder& decoder, const DecodeTrace& trace);

TokenSequence decode_greedy(const Matrix& fused, const TextDecoder& decoder, std::size_t max_len);

// Per-dimension standardisation of the pooled descriptors, one per modality,
// fitted on training data. Identity until fitted.
struct InputNorm {
  Matrix mean;   // 1 × 51
  Matrix scale;  // 1 × 51, 1 / max(std, floor)

  InputNorm();
  void apply(Matrix& descriptors) const;
};

inline constexpr double kNormStdFloor = 0.05;

InputNorm fit_input_norm(const Matrix& descriptors, double std_floor = kNormStdFloor);

// Descriptors computed once per sample; the encoder input never changes.
struct PreparedSample {
  Matrix rgb;
  Matrix evt;
  TokenSequence tokens;
  std::string id;
};

class SignTranslator {
 public:
  SignTranslator(const ModelConfig& cfg, PrototypeSet prototypes, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const PrototypeSet& prototypes() const { return prototypes_; }
  MemoryPool& mir() { return mir_; }
  MarParams& mar() { return mar_; }
  Mlp& encoder() { return encoder_; }
  TextDecoder& decoder() { return decoder_; }

  PreparedSample prepare(const AlignedSample& sample) const;
  // Fits both modality normalisers on the sampled frames of `samples`.
  void fit_input_norm(std::span<const AlignedSample> samples);
  const InputNorm& rgb_norm() const { return norm_rgb_; }
  const InputNorm& evt_norm() const { return norm_evt_; }

  Matrix fused_features(const PreparedSample& sample) const;
  Matrix teacher_forced_logits(const PreparedSample& sample) const;
  double loss(const PreparedSample& sample) const;
  // Forward + backward; gradients are added to every parameter's grad.
  double loss_and_backward(const PreparedSample& sample);
  TokenSequence translate(const PreparedSample& sample) const;

  // Only the parameter groups the active switches use.
  ParamList params();
  Checkpoint to_checkpoint();
  void load_checkpoint(const Checkpoint& ckpt);

 private:
  struct ForwardTrace;
  Matrix forward(const PreparedSample& sample, ForwardTrace* trace) const;

  ModelConfig cfg_;
  PrototypeSet prototypes_;
  InputNorm norm_rgb_, norm_evt_;
  Mlp encoder_;
  MemoryPool mir_;
  MarParams mar_;
  TextDecoder decoder_;
};

struct TrainConfig {
  std::size_t epochs = 200;
  double lr0 = 0.01;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  // Keeps alpha and beta pinned at their current values.
  bool freeze_scales = false;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;
};

using TrainProgress = std::function<void(std::size_t epoch, double mean_loss, double lr)>;

// Per-sample SGD with a cosine-annealed learning rate over epochs × |dataset| steps.
// Throws NumericError as soon as a loss or parameter becomes non-finite.
TrainResult train(SignTranslator& model, std::span<const PreparedSample> dataset,
                  const TrainConfig& cfg, const TrainProgress& progress = {});

}  // namespace m2slt
