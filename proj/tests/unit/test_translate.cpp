#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "m2slt/error.hpp"
#include "m2slt/translate.hpp"
#include "support/micro_model.hpp"

using namespace m2slt;

namespace {

// Decoder whose logits depend only on the previous token: +margin on `next[prev]`.
TextDecoder successor_decoder(std::size_t feature_dim, std::size_t vocab,
                              const std::vector<int>& next, double margin) {
  Rng rng(0);
  TextDecoder dec(feature_dim, vocab, DecoderConfig{vocab, vocab, 1}, rng);
  dec.embedding.value.fill(0.0);
  for (std::size_t v = 0; v < vocab; ++v) dec.embedding.value(v, v) = 1.0;
  auto& l0 = dec.mlp.layers()[0];
  auto& l1 = dec.mlp.layers()[1];
  l0.weight.value.fill(0.0);
  l0.bias.value.fill(0.0);
  for (std::size_t v = 0; v < vocab; ++v) l0.weight.value(feature_dim + v, v) = 1.0;
  l1.weight.value.fill(0.0);
  l1.bias.value.fill(0.0);
  for (std::size_t v = 0; v < vocab; ++v)
    if (next[v] >= 0) l1.weight.value(v, static_cast<std::size_t>(next[v])) = margin;
  return dec;
}

double scalar_cross_entropy(std::span<const double> z, int target) {
  double sum = 0.0;
  for (double v : z) sum += std::exp(v);
  return std::log(sum) - z[static_cast<std::size_t>(target)];
}

}  // namespace

TEST_CASE("uniform frame sampling") {
  ModelConfig cfg;
  CHECK(sampled_frame_indices(10, cfg) == std::vector<std::size_t>{0, 4, 8});
  CHECK(sampled_frame_indices(300, cfg).size() == 64);
  for (std::size_t t = 1; t < 400; t += 7)
    for (std::size_t interval : {1, 3, 4})
      for (std::size_t cap : {1, 10, 64}) {
        cfg.frame_interval = interval;
        cfg.max_frames = cap;
        CHECK(sampled_frame_indices(t, cfg).size() == std::min((t + interval - 1) / interval, cap));
      }
  Rng rng(1);
  const FrameSequence f = testing::random_frames(rng, 10, 4, 4);
  ModelConfig def;
  const FrameSequence s = sample_frames(f, def);
  REQUIRE(s.frames == 3);
  CHECK(s.at(2, 1, 3, 2) == f.at(8, 1, 3, 2));
}

TEST_CASE("model config validation") {
  ModelConfig cfg;
  cfg.frame_interval = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = ModelConfig{};
  cfg.max_frames = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = ModelConfig{};
  cfg.vocab_size = 4;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = ModelConfig{};
  cfg.mir.k = cfg.mir.n_slots + 1;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  CHECK_NOTHROW(validate(ModelConfig{}));
}

TEST_CASE("visual encoding") {
  Rng rng(2);
  const Mlp enc({kDescriptorDim, 9, 6}, rng);
  Mlp biased = enc;
  for (auto& l : biased.layers())
    for (double& b : l.bias.value.data()) b = rng.uniform(-0.5, 0.5);

  const Matrix zero = visual_encode(FrameSequence(5, 8, 8), biased);
  const Matrix bias_response = mlp_forward(biased, Matrix(1, kDescriptorDim));
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t k = 0; k < 6; ++k) CHECK(zero(t, k) == bias_response(0, k));

  const FrameSequence f = testing::random_frames(rng, 5, 8, 12);
  const Matrix out = visual_encode(f, biased);
  const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  const Matrix permuted = visual_encode(f.select(perm), biased);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 6; ++k) CHECK(permuted(i, k) == out(perm[i], k));

  // Manual pool: 8x12 splits into 2x3 cells.
  Matrix desc(5, kDescriptorDim);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 12; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = f.at(t, y, x, c);
          desc(t, c) += v / 96.0;
          desc(t, 3 + ((y / 2) * 4 + x / 3) * 3 + c) += v / 6.0;
        }
  const Matrix manual = mlp_forward(biased, desc);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(std::abs(out.data()[i] - manual.data()[i]) <= 1e-10);
  CHECK_THROWS_AS(visual_encode(FrameSequence(0, 8, 8), enc), ArgumentError);
}

TEST_CASE("fusion is elementwise summation") {
  Rng rng(3);
  const Matrix a = testing::random_matrix(rng, 4, 5), b = testing::random_matrix(rng, 4, 5),
               c = testing::random_matrix(rng, 4, 5), z(4, 5);
  CHECK(fuse(a, z, z) == a);
  CHECK(fuse(z, b, z) == b);
  CHECK(fuse(z, z, c) == c);
  const Matrix abc = fuse(a, b, c);
  for (std::size_t i = 0; i < abc.size(); ++i)
    CHECK(abc.data()[i] == a.data()[i] + b.data()[i] + c.data()[i]);
  CHECK(fuse(c, a, b) == fuse(b, c, a));
  CHECK(fuse(fuse(a, b, z), c, z) == fuse(a, fuse(b, c, z), z));
  CHECK_THROWS_AS(fuse(a, b, Matrix(3, 5)), ArgumentError);
}

TEST_CASE("uniform logits cost ln|V| per step") {
  Rng rng(4);
  TextDecoder dec(6, 10, DecoderConfig{4, 8, 1}, rng);
  auto& last = dec.mlp.layers().back();
  last.weight.value.fill(0.0);
  last.bias.value.fill(0.0);
  const DecodeResult r = decode_loss(testing::random_matrix(rng, 5, 6), {4, 7, 9}, dec);
  CHECK(r.loss == doctest::Approx(4.0 * std::log(10.0)).epsilon(1e-12));
  CHECK(r.logits.rows() == 4);
}

TEST_CASE("peaked decoder: near-zero loss and exact greedy output") {
  // bos -> 4 -> 6 -> 5 -> eos
  const std::vector<int> next{4, -1, -1, -1, 6, 1, 5};
  const TextDecoder dec = successor_decoder(3, 7, next, 20.0);
  const Matrix fused(2, 3);
  CHECK(decode_loss(fused, {4, 6, 5}, dec).loss <= 1e-3);
  CHECK(decode_greedy(fused, dec, 10) == TokenSequence{4, 6, 5});
  CHECK(decode_greedy(fused, dec, 2) == TokenSequence{4, 6});

  const TextDecoder eos_first = successor_decoder(3, 7, {1, -1, -1, -1, -1, -1, -1}, 20.0);
  CHECK(decode_greedy(fused, eos_first, 10).empty());
}

TEST_CASE("greedy ties go to the lowest id") {
  Rng rng(5);
  TextDecoder dec(3, 8, DecoderConfig{2, 4, 1}, rng);
  auto& last = dec.mlp.layers().back();
  last.weight.value.fill(0.0);
  last.bias.value.fill(0.0);
  last.bias.value(0, 6) = 1.0;
  last.bias.value(0, 5) = 1.0;
  CHECK(decode_greedy(Matrix(1, 3), dec, 3) == TokenSequence{5, 5, 5});
}

TEST_CASE("decode loss matches a per-step oracle") {
  Rng rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    TextDecoder dec(5, 9, DecoderConfig{3, 7, 1 + rng.below(2)}, rng);
    const Matrix fused = testing::random_matrix(rng, 1 + rng.below(5), 5);
    TokenSequence target;
    for (std::size_t i = 0, n = 1 + rng.below(5); i < n; ++i)
      target.push_back(static_cast<int>(kFirstSymbol + rng.below(5)));
    const DecodeResult r = decode_loss(fused, target, dec);

    const Matrix ctx = mean_rows(fused);
    double oracle = 0.0;
    std::vector<int> prev{kBos};
    prev.insert(prev.end(), target.begin(), target.end());
    std::vector<int> next(target.begin(), target.end());
    next.push_back(kEos);
    for (std::size_t t = 0; t < prev.size(); ++t) {
      Matrix x(1, 8);
      for (std::size_t k = 0; k < 5; ++k) x(0, k) = ctx(0, k);
      for (std::size_t k = 0; k < 3; ++k)
        x(0, 5 + k) = dec.embedding.value(static_cast<std::size_t>(prev[t]), k);
      oracle += scalar_cross_entropy(mlp_forward(dec.mlp, x).row(0), next[t]);
    }
    CHECK(std::abs(r.loss - oracle) <= 1e-9);
    CHECK(r.loss >= 0.0);
    CHECK(decode_greedy(fused, dec, 4).size() <= 4);
  }
}

TEST_CASE("decode loss rejects bad targets") {
  Rng rng(7);
  TextDecoder dec(3, 6, DecoderConfig{2, 4, 1}, rng);
  CHECK_THROWS_AS(decode_loss(Matrix(2, 3), {4, 6}, dec), ArgumentError);
  CHECK_THROWS_AS(decode_loss(Matrix(2, 3), {}, dec), ArgumentError);
  CHECK_THROWS_AS(decode_loss(Matrix(2, 3), {4, kEos, 5}, dec), ArgumentError);
  CHECK_THROWS_AS(decode_loss(Matrix(2, 4), {4}, dec), ArgumentError);
}

TEST_CASE("vocabulary") {
  const Vocab v = Vocab::synthetic(8);
  CHECK(v.size() == 8);
  CHECK(v.token(kBos) == "<bos>");
  CHECK(v.token(kEos) == "<eos>");
  CHECK(v.id("<pad>") == kPad);
  for (int i = 0; i < 8; ++i) CHECK(v.id(v.token(i)) == i);
  CHECK(v.id("nope") == kUnk);
  CHECK(v.render({4, 7}) == "w4 w7");
  CHECK_THROWS_AS(v.token(8), ArgumentError);
  CHECK_THROWS_AS(Vocab({"a", "a"}), ArgumentError);
}

TEST_CASE("end-to-end gradients on the micro configuration") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    testing::MicroCase c = testing::micro_case(seed);
    const GradCheckResult r = testing::micro_gradient_check(c);
    INFO("seed " << seed << " worst " << r.worst_param << "[" << r.worst_index << "] analytic "
                 << r.analytic << " numeric " << r.numeric);
    CHECK(r.checked > 100);
    CHECK(r.max_rel_error <= 1e-4);
  }
  ModelConfig cfg = testing::micro_config();
  cfg.ablation = AblationSwitches{false, true, false};
  testing::MicroCase partial = testing::micro_case(4, cfg);
  CHECK(testing::micro_gradient_check(partial).max_rel_error <= 1e-4);
}

TEST_CASE("zero residual scales reproduce the plain baseline") {
  ModelConfig full = testing::micro_config();
  testing::MicroCase c = testing::micro_case(5, full);
  c.model->mir().alpha.value(0, 0) = 0.0;
  c.model->mar().beta.value(0, 0) = 0.0;

  ModelConfig base = full;
  base.ablation = AblationSwitches{false, false, false};
  SignTranslator plain(base, PrototypeSet{}, 5);
  // Copy the shared groups so only the residual paths differ.
  plain.encoder() = c.model->encoder();
  plain.decoder() = c.model->decoder();
  CHECK(plain.teacher_forced_logits(c.sample) == c.model->teacher_forced_logits(c.sample));
}

TEST_CASE("parameter groups follow the switches") {
  ModelConfig cfg = testing::micro_config();
  auto names = [](ParamList l) {
    std::vector<std::string> out;
    for (auto& [n, p] : l) out.push_back(n.substr(0, n.find('.')));
    return out;
  };
  auto has = [](const std::vector<std::string>& v, const char* s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  const auto all = names(testing::micro_case(1, cfg).model->params());
  CHECK(has(all, "visual"));
  CHECK(has(all, "mir"));
  CHECK(has(all, "mar"));
  CHECK(has(all, "dec"));
  cfg.ablation = AblationSwitches{false, false, false};
  SignTranslator base(cfg, PrototypeSet{}, 1);
  const auto few = names(base.params());
  CHECK_FALSE(has(few, "mir"));
  CHECK_FALSE(has(few, "mar"));
  cfg.ablation.mar = true;
  CHECK_THROWS_AS(SignTranslator(cfg, PrototypeSet{}, 1), ConfigError);
}

TEST_CASE("input normaliser") {
  Rng rng(8);
  Matrix d = testing::random_matrix(rng, 40, kDescriptorDim, 2.0, 5.0);
  for (std::size_t i = 0; i < 40; ++i) d(i, 7) = 3.0;  // constant column hits the floor
  const InputNorm n = fit_input_norm(d);
  Matrix z = d;
  n.apply(z);
  for (std::size_t j = 0; j < kDescriptorDim; ++j) {
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 40; ++i) mu += z(i, j) / 40.0;
    for (std::size_t i = 0; i < 40; ++i) var += (z(i, j) - mu) * (z(i, j) - mu) / 40.0;
    CHECK(std::abs(mu) <= 1e-9);
    if (j == 7)
      CHECK(var == 0.0);
    else
      CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(n.scale(0, 7) == doctest::Approx(1.0 / kNormStdFloor));
  const InputNorm id;
  Matrix same = d;
  id.apply(same);
  CHECK(same == d);
  Matrix narrow(2, 5);
  CHECK_THROWS_AS(id.apply(narrow), ArgumentError);
  CHECK_THROWS_AS(fit_input_norm(Matrix(0, kDescriptorDim)), ArgumentError);
}

TEST_CASE("checkpoint restores weights and normalisers") {
  testing::MicroCase c = testing::micro_case(6);
  Rng rng(9);
  std::vector<AlignedSample> data;
  for (int i = 0; i < 3; ++i)
    data.push_back(align(testing::random_frames(rng, 4, 8, 8), testing::random_frames(rng, 4, 8, 8),
                         {4, 5}, "s"));
  c.model->fit_input_norm(data);
  const PreparedSample p = c.model->prepare(data[0]);
  const Checkpoint ckpt = c.model->to_checkpoint();

  testing::MicroCase fresh = testing::micro_case(77);
  fresh.model->load_checkpoint(ckpt);
  CHECK(fresh.model->rgb_norm().mean == c.model->rgb_norm().mean);
  CHECK(fresh.model->evt_norm().scale == c.model->evt_norm().scale);
  const PreparedSample q = fresh.model->prepare(data[0]);
  CHECK(q.rgb == p.rgb);
  CHECK(fresh.model->teacher_forced_logits(q) == c.model->teacher_forced_logits(p));
}

TEST_CASE("training: smooth decrease, determinism, frozen scales") {
  auto run = [](bool freeze, std::uint64_t seed) {
    testing::MicroCase c = testing::micro_case(seed);
    if (freeze) {
      c.model->mir().alpha.value(0, 0) = 0.0;
      c.model->mar().beta.value(0, 0) = 0.0;
    }
    const std::vector<PreparedSample> data{c.sample};
    TrainConfig tc;
    tc.epochs = 50;
    tc.lr0 = 0.01;
    tc.seed = 3;
    tc.freeze_scales = freeze;
    const Matrix enc_before = c.model->encoder().layers()[0].weight.value;
    TrainResult r = train(*c.model, data, tc);
    if (freeze) {
      CHECK(c.model->mir().alpha.value(0, 0) == 0.0);
      CHECK(c.model->mar().beta.value(0, 0) == 0.0);
      CHECK_FALSE(c.model->encoder().layers()[0].weight.value == enc_before);
    }
    return r;
  };
  const TrainResult a = run(false, 11);
  REQUIRE(a.epoch_loss.size() == 50);
  std::vector<double> ma;
  for (std::size_t e = 4; e < 50; ++e) {
    double s = 0.0;
    for (std::size_t k = e - 4; k <= e; ++k) s += a.epoch_loss[k];
    ma.push_back(s / 5.0);
  }
  for (std::size_t i = 1; i < ma.size(); ++i) CHECK(ma[i] <= ma[i - 1]);
  CHECK(a.epoch_lr.front() == doctest::Approx(0.01));

  const TrainResult b = run(false, 11);
  CHECK(a.epoch_loss == b.epoch_loss);

  const TrainResult f = run(true, 12);
  CHECK(f.epoch_loss.back() < f.epoch_loss.front());
}

TEST_CASE("training rejects an empty dataset") {
  testing::MicroCase c = testing::micro_case(1);
  CHECK_THROWS_AS(train(*c.model, std::vector<PreparedSample>{}, TrainConfig{}), ArgumentError);
}

TEST_CASE("a memorised sample is translated exactly") {
  // The 6-unit micro decoder tends to lose every relu unit; give it room.
  ModelConfig cfg = testing::micro_config();
  cfg.decoder = DecoderConfig{8, 32, 1};
  testing::MicroCase c = testing::micro_case(13, cfg);
  const std::vector<PreparedSample> data{c.sample};
  TrainConfig tc;
  tc.epochs = 300;
  tc.lr0 = 0.05;
  train(*c.model, data, tc);
  CHECK(c.model->translate(c.sample) == c.sample.tokens);
}
