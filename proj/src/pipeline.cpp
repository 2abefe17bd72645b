#include "m2slt/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "binary_io.hpp"
#include "m2slt/checkpoint.hpp"
#include "m2slt/error.hpp"
#include "m2slt/synth.hpp"

namespace m2slt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kWindowEncoderStream = 0x70;

json proposals_json(std::span<const Proposal> ps) {
  json out = json::array();
  for (const Proposal& p : ps) out.push_back({p.start, p.end});
  return out;
}

SignTranslator model_from_checkpoint(const RunConfig& cfg, const Checkpoint& ckpt) {
  PrototypeSet protos;
  if (cfg.model.ablation.mar) {
    const Matrix* m = ckpt.find("mar.prototypes");
    if (!m) throw ConfigError("checkpoint has no mar.prototypes but MaR is enabled");
    protos.prototypes = *m;
    protos.sizes.assign(m->rows(), 0);
  }
  SignTranslator model(cfg.model, std::move(protos), cfg.seed);
  model.load_checkpoint(ckpt);
  return model;
}

}  // namespace

CropResult informative_crop(const AlignedSample& sample, const EventStream& events,
                            std::span<const std::uint64_t> bin_edges, const SegmentConfig& cfg) {
  const SegmentResult seg = segment_sample(sample.rgb, events, bin_edges, cfg);
  return crop_sample(sample, seg.merged);
}

std::vector<AlignedSample> crop_all(std::span<const LoadedSample> samples, const SegmentConfig& cfg) {
  std::vector<AlignedSample> out;
  out.reserve(samples.size());
  for (const LoadedSample& s : samples)
    out.push_back(informative_crop(s.sample, s.events, s.bin_edges, cfg).sample);
  return out;
}

std::vector<AlignedSample> crop_all(std::span<const SynthSample> samples, const SegmentConfig& cfg) {
  std::vector<AlignedSample> out;
  out.reserve(samples.size());
  for (const SynthSample& s : samples)
    out.push_back(informative_crop(s.sample, s.events, s.bin_edges, cfg).sample);
  return out;
}

ToyVideoEncoder window_encoder(const RunConfig& cfg) {
  return ToyVideoEncoder(derive_seed(cfg.seed, kWindowEncoderStream), cfg.model.feature_dim);
}

ClusterResult cluster_samples(std::span<const AlignedSample> cropped, const RunConfig& cfg) {
  if (cropped.empty()) throw DataError("cluster: dataset is empty");
  const ToyVideoEncoder encoder = window_encoder(cfg);
  std::map<TokenSequence, const AlignedSample*> unique;
  for (const AlignedSample& s : cropped) unique.emplace(s.tokens, &s);

  std::vector<Matrix> parts;
  std::size_t rows = 0;
  for (const AlignedSample& s : cropped) {
    // Keep first occurrence, in dataset order.
    if (unique.at(s.tokens) != &s) continue;
    parts.push_back(sample_window_features(s.rgb, s.evt, cfg.window, encoder));
    rows += parts.back().rows();
  }
  Matrix features(rows, encoder.output_dim());
  std::size_t r = 0;
  for (const Matrix& m : parts)
    for (std::size_t i = 0; i < m.rows(); ++i, ++r)
      for (std::size_t j = 0; j < m.cols(); ++j) features(r, j) = m(i, j);
  return cluster_features(features, cfg.dbscan);
}

void save_prototypes(const fs::path& path, const PrototypeSet& set) {
  Checkpoint ckpt;
  ckpt.put("mar.prototypes", set.prototypes);
  Matrix sizes(1, set.sizes.size());
  for (std::size_t i = 0; i < set.sizes.size(); ++i) sizes(0, i) = static_cast<double>(set.sizes[i]);
  ckpt.put("mar.prototype_sizes", sizes);
  save_checkpoint(path, ckpt);
}

PrototypeSet load_prototypes(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const Matrix* protos = ckpt.find("mar.prototypes");
  if (!protos) throw FormatError(path.string() + ": no mar.prototypes tensor");
  if (protos->rows() == 0) throw DataError(path.string() + ": prototype set is empty");
  PrototypeSet set;
  set.prototypes = *protos;
  set.sizes.assign(protos->rows(), 0);
  if (const Matrix* sizes = ckpt.find("mar.prototype_sizes"); sizes && sizes->size() == protos->rows())
    for (std::size_t i = 0; i < sizes->size(); ++i)
      set.sizes[i] = static_cast<std::size_t>(sizes->data()[i]);
  return set;
}

std::vector<PreparedSample> prepare_all(const SignTranslator& model,
                                        std::span<const AlignedSample> cropped) {
  const auto vocab = static_cast<int>(model.config().vocab_size);
  std::vector<PreparedSample> out;
  out.reserve(cropped.size());
  for (const AlignedSample& s : cropped) {
    for (int tok : s.tokens)
      if (tok < kFirstSymbol || tok >= vocab)
        throw ConfigError("sample '" + s.meta + "': token " + std::to_string(tok) +
                          " outside the model vocabulary");
    out.push_back(model.prepare(s));
  }
  return out;
}

ScoreReport evaluate(const SignTranslator& model, std::span<const PreparedSample> samples,
                     BleuSmoothing smoothing) {
  std::vector<TokenSequence> hyp, ref;
  for (const PreparedSample& s : samples) {
    hyp.push_back(model.translate(s));
    ref.push_back(s.tokens);
  }
  return score_corpus(hyp, ref, smoothing);
}

std::string score_json(const ScoreReport& r) {
  const json doc = {{"bleu1", r.bleu[0]}, {"bleu2", r.bleu[1]},   {"bleu3", r.bleu[2]},
                    {"bleu4", r.bleu[3]}, {"rouge_l", r.rouge_l}, {"n", r.n_samples}};
  return doc.dump();
}

void run_synth(const RunConfig& cfg, const fs::path& out_dir, bool text_events) {
  const auto samples = gen_dataset(cfg.synth, cfg.n_samples, cfg.seed);
  save_dataset(out_dir, samples, cfg.synth, text_events);
}

void run_segment(const RunConfig& cfg, const fs::path& dataset, bool verbose, std::ostream& out,
                 std::ostream& log) {
  const DatasetManifest manifest = load_manifest(dataset);
  if (manifest.samples.empty()) {
    log << "warning: no samples in " << dataset.string() << "\n";
    return;
  }
  for (const DatasetEntry& e : manifest.samples) {
    const LoadedSample s = load_sample(dataset, manifest, e);
    const SegmentResult seg = segment_sample(s.sample.rgb, s.events, s.bin_edges, cfg.segment);
    json line = {{"sample", e.id}, {"segments", proposals_json(seg.merged)}, {"source", "merged"}};
    if (verbose) {
      line["rgb"] = proposals_json(seg.rgb);
      line["event"] = proposals_json(seg.event);
    }
    out << line.dump() << "\n";
  }
}

ClusterResult run_cluster(const RunConfig& cfg, const fs::path& dataset, const fs::path& out_path,
                          std::ostream& out) {
  const auto loaded = load_dataset(dataset);
  const auto cropped = crop_all(loaded, cfg.segment);
  ClusterResult res = cluster_samples(cropped, cfg);
  save_prototypes(out_path, res.prototypes);
  const json report = {{"prototypes", res.prototypes.count()},
                       {"noise", res.noise},
                       {"eps", res.eps},
                       {"windows", res.labels.size()}};
  out << report.dump() << "\n";
  return res;
}

TrainResult run_train(const RunConfig& cfg, const fs::path& dataset,
                      const std::optional<fs::path>& prototypes, const fs::path& out_dir,
                      std::ostream& log) {
  const auto loaded = load_dataset(dataset);
  if (loaded.empty()) throw DataError("train: no samples in " + dataset.string());
  const auto cropped = crop_all(loaded, cfg.segment);

  PrototypeSet protos;
  if (cfg.model.ablation.mar) {
    if (prototypes) {
      protos = load_prototypes(*prototypes);
      if (protos.dim() != cfg.model.feature_dim)
        throw ConfigError("prototypes in " + prototypes->string() + " have dim " +
                          std::to_string(protos.dim()) + ", model.feature_dim is " +
                          std::to_string(cfg.model.feature_dim));
    } else {
      log << "no prototype file given; clustering the training set\n";
      protos = cluster_samples(cropped, cfg).prototypes;
    }
  }
  SignTranslator model(cfg.model, std::move(protos), cfg.seed);
  model.fit_input_norm(cropped);
  const auto prepared = prepare_all(model, cropped);
  const TrainResult res = train(model, prepared, cfg.train);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  save_checkpoint(out_dir / "model.m2sw", model.to_checkpoint());
  std::string csv = "epoch,mean_loss,lr\n";
  char line[96];
  for (std::size_t i = 0; i < res.epoch_loss.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", i, res.epoch_loss[i], res.epoch_lr[i]);
    csv += line;
  }
  detail::write_file(out_dir / "loss.csv", csv);
  detail::write_file(out_dir / "config.json", dump_run_config(cfg));
  return res;
}

ScoreReport run_eval(const RunConfig& cfg, const fs::path& dataset, const fs::path& checkpoint,
                     BleuSmoothing smoothing, const std::optional<fs::path>& feature_dump,
                     std::ostream& out) {
  const auto loaded = load_dataset(dataset);
  if (loaded.empty()) throw DataError("eval: no samples in " + dataset.string());
  const SignTranslator model = model_from_checkpoint(cfg, load_checkpoint(checkpoint));
  const auto prepared = prepare_all(model, crop_all(loaded, cfg.segment));
  const ScoreReport report = evaluate(model, prepared, smoothing);
  if (feature_dump) {
    std::string dump;
    for (const PreparedSample& s : prepared) {
      const Matrix pooled = mean_rows(model.fused_features(s));
      dump += json({{"sample", s.id}, {"features", pooled.data()}}).dump() + "\n";
    }
    detail::write_file(*feature_dump, dump);
  }
  out << score_json(report) << "\n";
  return report;
}

void run_translate(const RunConfig& cfg, const fs::path& dataset, const fs::path& checkpoint,
                   std::ostream& out) {
  const auto loaded = load_dataset(dataset);
  const SignTranslator model = model_from_checkpoint(cfg, load_checkpoint(checkpoint));
  const auto prepared = prepare_all(model, crop_all(loaded, cfg.segment));
  const Vocab vocab = Vocab::synthetic(cfg.model.vocab_size);
  for (const PreparedSample& s : prepared) {
    const TokenSequence hyp = model.translate(s);
    out << json({{"sample", s.id}, {"tokens", hyp}, {"text", vocab.render(hyp)}}).dump() << "\n";
  }
}

}  // namespace m2slt
