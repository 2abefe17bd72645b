#include "m2slt/translate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "m2slt/error.hpp"

namespace m2slt {

Vocab::Vocab(const std::vector<std::string>& symbols) {
  names_ = {"<bos>", "<eos>", "<pad>", "<unk>"};
  names_.insert(names_.end(), symbols.begin(), symbols.end());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!ids_.emplace(names_[i], static_cast<int>(i)).second)
      throw ArgumentError("Vocab: duplicate token '" + names_[i] + "'");
  }
}

Vocab Vocab::synthetic(std::size_t size) {
  if (size < static_cast<std::size_t>(kFirstSymbol))
    throw ArgumentError("Vocab: size must cover the reserved ids");
  std::vector<std::string> symbols;
  for (std::size_t i = kFirstSymbol; i < size; ++i) symbols.push_back("w" + std::to_string(i));
  return Vocab(symbols);
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size())
    throw ArgumentError("Vocab: id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::string Vocab::render(const TokenSequence& tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += token(tokens[i]);
  }
  return out;
}

void validate(const ModelConfig& cfg) {
  if (cfg.frame_interval < 1) throw ConfigError("model: frame_interval must be >= 1");
  if (cfg.max_frames < 1) throw ConfigError("model: max_frames must be >= 1");
  if (cfg.feature_dim < 1 || cfg.encoder_hidden < 1) throw ConfigError("model: zero dimension");
  if (cfg.vocab_size <= static_cast<std::size_t>(kFirstSymbol))
    throw ConfigError("model: vocab_size must exceed the 4 reserved ids");
  if (cfg.max_decode_len < 1) throw ConfigError("model: max_decode_len must be >= 1");
  if (cfg.decoder.layers < 1 || cfg.decoder.hidden < 1 || cfg.decoder.emb_dim < 1)
    throw ConfigError("model: decoder dimensions must be positive");
  if (cfg.mir.k < 1 || cfg.mir.k > cfg.mir.n_slots)
    throw ConfigError("model: mir.k must lie in [1, n_slots]");
  if (cfg.recurrent_passes < 1) throw ConfigError("model: recurrent_passes must be >= 1");
  if (!(cfg.mar.beta_h > 0.0) || cfg.mar.iterations < 1)
    throw ConfigError("model: mar.beta_h must be positive and iterations >= 1");
}

std::vector<std::size_t> sampled_frame_indices(std::size_t frames, const ModelConfig& cfg) {
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < frames && idx.size() < cfg.max_frames; t += cfg.frame_interval)
    idx.push_back(t);
  return idx;
}

FrameSequence sample_frames(const FrameSequence& frames, const ModelConfig& cfg) {
  return frames.select(sampled_frame_indices(frames.frames, cfg));
}

Matrix visual_encode(const FrameSequence& frames, const Mlp& encoder) {
  if (frames.frames == 0) throw ArgumentError("visual_encode: no frames");
  return mlp_forward(encoder, frame_descriptors(frames));
}

Matrix fuse(const Matrix& f_micro, const Matrix& f_evt_macro, const Matrix& f_rgb_macro) {
  if (!f_micro.same_shape(f_evt_macro) || !f_micro.same_shape(f_rgb_macro))
    throw ArgumentError("fuse: inputs must share one shape");
  Matrix out(f_micro.rows(), f_micro.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = f_micro.data()[i] + f_evt_macro.data()[i] + f_rgb_macro.data()[i];
  return out;
}

TextDecoder::TextDecoder(std::size_t feature_dim, std::size_t vocab_size, const DecoderConfig& cfg,
                         Rng& rng) {
  embedding = Param(glorot_uniform(vocab_size, cfg.emb_dim, rng));
  std::vector<std::size_t> dims{feature_dim + cfg.emb_dim};
  for (std::size_t i = 0; i < cfg.layers; ++i) dims.push_back(cfg.hidden);
  dims.push_back(vocab_size);
  mlp = Mlp(dims, rng);
}

void TextDecoder::register_params(ParamList& out) {
  out.emplace_back("dec.embedding", &embedding);
  mlp.register_params("dec.mlp", out);
}

namespace {

void check_target(const TokenSequence& target, std::size_t vocab) {
  if (target.empty()) throw ArgumentError("decode_loss: target needs at least one token");
  for (int id : target) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw ArgumentError("decode_loss: token id " + std::to_string(id) + " outside vocabulary");
    if (id == kBos || id == kEos)
      throw ArgumentError("decode_loss: bos/eos may not appear inside a target");
  }
}

Matrix decoder_inputs(const Matrix& context, const TextDecoder& decoder,
                      std::span<const int> previous) {
  const std::size_t d = context.cols();
  const std::size_t e = decoder.embedding.value.cols();
  Matrix x(previous.size(), d + e);
  for (std::size_t t = 0; t < previous.size(); ++t) {
    auto row = x.row(t);
    std::copy(context.data().begin(), context.data().end(), row.begin());
    const auto emb = decoder.embedding.value.row(static_cast<std::size_t>(previous[t]));
    std::copy(emb.begin(), emb.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return x;
}

void check_context(const Matrix& fused, const TextDecoder& decoder) {
  if (fused.rows() == 0) throw ArgumentError("decoder: empty feature sequence");
  if (fused.cols() != decoder.context_dim())
    throw ArgumentError("decoder: feature dim " + std::to_string(fused.cols()) +
                        " differs from decoder context dim " +
                        std::to_string(decoder.context_dim()));
}

}  // namespace

DecodeResult decode_loss(const Matrix& fused, const TokenSequence& target,
                         const TextDecoder& decoder, DecodeTrace* trace) {
  check_context(fused, decoder);
  check_target(target, decoder.vocab_size());
  std::vector<int> previous{kBos};
  previous.insert(previous.end(), target.begin(), target.end());
  std::vector<int> targets(target.begin(), target.end());
  targets.push_back(kEos);

  const Matrix context = mean_rows(fused);
  const Matrix x = decoder_inputs(context, decoder, previous);
  DecodeResult res;
  res.logits = mlp_forward(decoder.mlp, x, trace ? &trace->tape : nullptr);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto z = res.logits.row(t);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    res.loss += mx + std::log(sum) - z[static_cast<std::size_t>(targets[t])];
  }
  if (trace) {
    trace->context_rows = fused.rows();
    trace->previous = std::move(previous);
    trace->targets = std::move(targets);
    trace->probs = softmax_rows(res.logits);
  }
  return res;
}

Matrix decode_loss_backward(TextDecoder& decoder, const DecodeTrace& trace) {
  Matrix d_logits = trace.probs;
  for (std::size_t t = 0; t < trace.targets.size(); ++t)
    d_logits(t, static_cast<std::size_t>(trace.targets[t])) -= 1.0;
  MlpGradients g = mlp_backward(decoder.mlp, trace.tape, d_logits);
  decoder.mlp.accumulate(g);

  const std::size_t d = decoder.context_dim();
  Matrix d_context(1, d);
  for (std::size_t t = 0; t < g.grad_in.rows(); ++t) {
    const auto row = g.grad_in.row(t);
    for (std::size_t j = 0; j < d; ++j) d_context(0, j) += row[j];
    auto emb_grad = decoder.embedding.grad.row(static_cast<std::size_t>(trace.previous[t]));
    for (std::size_t j = 0; j < emb_grad.size(); ++j) emb_grad[j] += row[d + j];
  }
  Matrix d_fused(trace.context_rows, d);
  const double inv = 1.0 / static_cast<double>(trace.context_rows);
  for (std::size_t i = 0; i < trace.context_rows; ++i)
    for (std::size_t j = 0; j < d; ++j) d_fused(i, j) = d_context(0, j) * inv;
  return d_fused;
}

TokenSequence decode_greedy(const Matrix& fused, const TextDecoder& decoder, std::size_t max_len) {
  check_context(fused, decoder);
  const Matrix context = mean_rows(fused);
  TokenSequence out;
  int prev = kBos;
  while (out.size() < max_len) {
    const int step_prev[1] = {prev};
    const Matrix z = mlp_forward(decoder.mlp, decoder_inputs(context, decoder, step_prev));
    const auto row = z.row(0);
    // max_element returns the first maximum, i.e. the lowest id on ties.
    const int best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == kEos) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

struct SignTranslator::ForwardTrace {
  MlpTape enc_rgb, enc_evt;
  MirTrace mir_rgb, mir_evt;
  MirFuseTrace mir_fuse;
  MarTrace mar_rgb, mar_evt;
};

SignTranslator::SignTranslator(const ModelConfig& cfg, PrototypeSet prototypes, std::uint64_t seed)
    : cfg_(cfg), prototypes_(std::move(prototypes)) {
  validate(cfg_);
  // Independent streams keep encoder/decoder initialisation identical across ablations.
  Rng enc_rng(derive_seed(seed, 1));
  Rng mir_rng(derive_seed(seed, 2));
  Rng mar_rng(derive_seed(seed, 3));
  Rng dec_rng(derive_seed(seed, 4));
  encoder_ = Mlp({kDescriptorDim, cfg_.encoder_hidden, cfg_.feature_dim}, enc_rng);
  mir_ = MemoryPool(cfg_.feature_dim, cfg_.mir, mir_rng);
  if (cfg_.ablation.mar) {
    if (prototypes_.count() == 0)
      throw ConfigError("model: MaR is enabled but the prototype set is empty");
  }
  const std::size_t pattern_dim = prototypes_.count() > 0 ? prototypes_.dim() : 1;
  mar_ = MarParams(cfg_.feature_dim, pattern_dim, cfg_.mar, mar_rng);
  decoder_ = TextDecoder(cfg_.feature_dim, cfg_.vocab_size, cfg_.decoder, dec_rng);
}

InputNorm::InputNorm() : mean(1, kDescriptorDim, 0.0), scale(1, kDescriptorDim, 1.0) {}

void InputNorm::apply(Matrix& d) const {
  if (d.cols() != mean.cols()) throw ArgumentError("InputNorm: descriptor width mismatch");
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) = (d(i, j) - mean(0, j)) * scale(0, j);
}

InputNorm fit_input_norm(const Matrix& d, double std_floor) {
  if (d.rows() == 0) throw ArgumentError("fit_input_norm: no rows");
  if (!(std_floor > 0.0)) throw ArgumentError("fit_input_norm: std_floor must be positive");
  InputNorm n;
  n.mean = Matrix(1, d.cols(), 0.0);
  n.scale = Matrix(1, d.cols(), 1.0);
  const double rows = static_cast<double>(d.rows());
  for (std::size_t j = 0; j < d.cols(); ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) mu += d(i, j);
    mu /= rows;
    double var = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) var += (d(i, j) - mu) * (d(i, j) - mu);
    n.mean(0, j) = mu;
    n.scale(0, j) = 1.0 / std::max(std::sqrt(var / rows), std_floor);
  }
  return n;
}

PreparedSample SignTranslator::prepare(const AlignedSample& sample) const {
  const auto idx = sampled_frame_indices(sample.rgb.frames, cfg_);
  if (idx.empty()) throw DataError("sample '" + sample.meta + "' has no frames");
  PreparedSample out{frame_descriptors(sample.rgb, idx), frame_descriptors(sample.evt, idx),
                     sample.tokens, sample.meta};
  norm_rgb_.apply(out.rgb);
  norm_evt_.apply(out.evt);
  return out;
}

void SignTranslator::fit_input_norm(std::span<const AlignedSample> samples) {
  std::vector<Matrix> rgb, evt;
  std::size_t rows = 0;
  for (const AlignedSample& s : samples) {
    const auto idx = sampled_frame_indices(s.rgb.frames, cfg_);
    rgb.push_back(frame_descriptors(s.rgb, idx));
    evt.push_back(frame_descriptors(s.evt, idx));
    rows += idx.size();
  }
  auto stack = [rows](const std::vector<Matrix>& parts) {
    Matrix all(rows, kDescriptorDim);
    std::size_t r = 0;
    for (const Matrix& m : parts)
      for (std::size_t i = 0; i < m.rows(); ++i, ++r)
        std::copy(m.row(i).begin(), m.row(i).end(), all.row(r).begin());
    return all;
  };
  norm_rgb_ = m2slt::fit_input_norm(stack(rgb));
  norm_evt_ = m2slt::fit_input_norm(stack(evt));
}

Matrix SignTranslator::forward(const PreparedSample& s, ForwardTrace* tr) const {
  const auto& ab = cfg_.ablation;
  const Matrix f_rgb = mlp_forward(encoder_, s.rgb, tr ? &tr->enc_rgb : nullptr);
  const Matrix f_evt = mlp_forward(encoder_, s.evt, tr ? &tr->enc_evt : nullptr);

  Matrix micro;
  if (ab.mir_micro) {
    const Matrix h_rgb = mir_enhance(f_rgb, mir_, tr ? &tr->mir_rgb : nullptr);
    const Matrix h_evt = mir_enhance(f_evt, mir_, tr ? &tr->mir_evt : nullptr);
    micro = mir_fuse(h_rgb, h_evt, mir_, ab.mir_recurrent, cfg_.recurrent_passes,
                     tr ? &tr->mir_fuse : nullptr);
  } else {
    micro = mir_fuse(f_rgb, f_evt, mir_, ab.mir_recurrent, cfg_.recurrent_passes,
                     tr ? &tr->mir_fuse : nullptr);
  }

  if (ab.mar) {
    const Matrix m_rgb = mar_enhance(f_rgb, prototypes_, mar_, tr ? &tr->mar_rgb : nullptr);
    const Matrix m_evt = mar_enhance(f_evt, prototypes_, mar_, tr ? &tr->mar_evt : nullptr);
    return fuse(micro, m_evt, m_rgb);
  }
  return fuse(micro, f_evt, f_rgb);
}

Matrix SignTranslator::fused_features(const PreparedSample& sample) const {
  return forward(sample, nullptr);
}

Matrix SignTranslator::teacher_forced_logits(const PreparedSample& sample) const {
  return decode_loss(forward(sample, nullptr), sample.tokens, decoder_).logits;
}

double SignTranslator::loss(const PreparedSample& sample) const {
  return decode_loss(forward(sample, nullptr), sample.tokens, decoder_).loss;
}

double SignTranslator::loss_and_backward(const PreparedSample& sample) {
  ForwardTrace tr;
  const Matrix fused = forward(sample, &tr);
  DecodeTrace dt;
  const double loss = decode_loss(fused, sample.tokens, decoder_, &dt).loss;
  const Matrix d_fused = decode_loss_backward(decoder_, dt);

  const auto& ab = cfg_.ablation;
  // Every fuse input receives d_fused unchanged.
  const Matrix d_sum = mir_fuse_backward(mir_, tr.mir_fuse, d_fused);
  Matrix d_rgb = ab.mir_micro ? mir_enhance_backward(mir_, tr.mir_rgb, d_sum) : d_sum;
  Matrix d_evt = ab.mir_micro ? mir_enhance_backward(mir_, tr.mir_evt, d_sum) : d_sum;
  if (ab.mar) {
    add_in_place(d_rgb, mar_enhance_backward(mar_, prototypes_, tr.mar_rgb, d_fused));
    add_in_place(d_evt, mar_enhance_backward(mar_, prototypes_, tr.mar_evt, d_fused));
  } else {
    add_in_place(d_rgb, d_fused);
    add_in_place(d_evt, d_fused);
  }
  encoder_.accumulate(mlp_backward(encoder_, tr.enc_rgb, d_rgb));
  encoder_.accumulate(mlp_backward(encoder_, tr.enc_evt, d_evt));
  return loss;
}

TokenSequence SignTranslator::translate(const PreparedSample& sample) const {
  return decode_greedy(forward(sample, nullptr), decoder_, cfg_.max_decode_len);
}

ParamList SignTranslator::params() {
  ParamList out;
  encoder_.register_params("visual", out);
  if (cfg_.ablation.mir_micro || cfg_.ablation.mir_recurrent) mir_.register_params(out);
  if (cfg_.ablation.mar) mar_.register_params(out);
  decoder_.register_params(out);
  return out;
}

Checkpoint SignTranslator::to_checkpoint() {
  Checkpoint ckpt = checkpoint_from_params(params());
  ckpt.put("visual.norm.rgb_mean", norm_rgb_.mean);
  ckpt.put("visual.norm.rgb_scale", norm_rgb_.scale);
  ckpt.put("visual.norm.evt_mean", norm_evt_.mean);
  ckpt.put("visual.norm.evt_scale", norm_evt_.scale);
  if (cfg_.ablation.mar) ckpt.put("mar.prototypes", prototypes_.prototypes);
  return ckpt;
}

void SignTranslator::load_checkpoint(const Checkpoint& ckpt) {
  if (cfg_.ablation.mar) {
    const Matrix* protos = ckpt.find("mar.prototypes");
    if (!protos) throw ConfigError("checkpoint has no mar.prototypes but MaR is enabled");
    if (protos->cols() != prototypes_.dim())
      throw ConfigError("checkpoint prototype dim does not match the model");
    prototypes_.prototypes = *protos;
    prototypes_.sizes.assign(protos->rows(), 0);
  }
  load_params(ckpt, params());
  // Older checkpoints without normalisers keep the identity.
  if (ckpt.find("visual.norm.rgb_mean")) {
    norm_rgb_.mean = ckpt.require("visual.norm.rgb_mean", 1, kDescriptorDim);
    norm_rgb_.scale = ckpt.require("visual.norm.rgb_scale", 1, kDescriptorDim);
    norm_evt_.mean = ckpt.require("visual.norm.evt_mean", 1, kDescriptorDim);
    norm_evt_.scale = ckpt.require("visual.norm.evt_scale", 1, kDescriptorDim);
  }
}

TrainResult train(SignTranslator& model, std::span<const PreparedSample> dataset,
                  const TrainConfig& cfg, const TrainProgress& progress) {
  if (dataset.empty()) throw ArgumentError("train: empty dataset");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  SgdConfig sgd{cfg.lr0, cfg.epochs * dataset.size(), cfg.momentum};
  validate(sgd);

  ParamList params = model.params();
  std::vector<Param*> update;
  for (const auto& [name, p] : params) {
    if (cfg.freeze_scales && (name == "mir.alpha" || name == "mar.beta")) continue;
    update.push_back(p);
  }

  Rng rng(derive_seed(cfg.seed, 0x5EED));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult res;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const double lr_start = cosine_annealed_lr(step, sgd);
    double total = 0.0;
    for (std::size_t idx : order) {
      zero_grads(params);
      const double loss = model.loss_and_backward(dataset[idx]);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " on sample '" +
                           dataset[idx].id + "'");
      sgd_step(std::span<Param* const>(update), step, sgd);
      ++step;
      total += loss;
    }
    for (const auto& [name, p] : params)
      if (!all_finite(p->value))
        throw NumericError("parameter '" + name + "' became non-finite at epoch " +
                           std::to_string(epoch));
    const double mean = total / static_cast<double>(dataset.size());
    res.epoch_loss.push_back(mean);
    res.epoch_lr.push_back(lr_start);
    if (progress) progress(epoch, mean, lr_start);
  }
  return res;
}

}  // namespace m2slt
