#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "m2slt/config.hpp"
#include "m2slt/dataset.hpp"
#include "m2slt/metrics.hpp"
#include "m2slt/prototype.hpp"
#include "m2slt/segment.hpp"
#include "m2slt/translate.hpp"

namespace m2slt {

// Segments a sample and keeps only the merged informative frames (the whole
// sample when nothing was proposed).
CropResult informative_crop(const AlignedSample& sample, const EventStream& events,
                            std::span<const std::uint64_t> bin_edges, const SegmentConfig& cfg);

std::vector<AlignedSample> crop_all(std::span<const LoadedSample> samples, const SegmentConfig& cfg);
std::vector<AlignedSample> crop_all(std::span<const SynthSample> samples, const SegmentConfig& cfg);

ToyVideoEncoder window_encoder(const RunConfig& cfg);

// One representative per distinct token sequence, all windows pooled, then DBSCAN.
ClusterResult cluster_samples(std::span<const AlignedSample> cropped, const RunConfig& cfg);

// Prototypes travel as an M2SW file with mar.prototypes and mar.prototype_sizes.
void save_prototypes(const std::filesystem::path& path, const PrototypeSet& set);
PrototypeSet load_prototypes(const std::filesystem::path& path);

// Throws ConfigError when a token falls outside the model vocabulary.
std::vector<PreparedSample> prepare_all(const SignTranslator& model,
                                        std::span<const AlignedSample> cropped);

ScoreReport evaluate(const SignTranslator& model, std::span<const PreparedSample> samples,
                     BleuSmoothing smoothing = BleuSmoothing::add_one);

// Subcommand bodies. `out` receives the primary output, `log` diagnostics.
void run_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, bool text_events);
void run_segment(const RunConfig& cfg, const std::filesystem::path& dataset, bool verbose,
                 std::ostream& out, std::ostream& log);
ClusterResult run_cluster(const RunConfig& cfg, const std::filesystem::path& dataset,
                          const std::filesystem::path& out_path, std::ostream& out);
TrainResult run_train(const RunConfig& cfg, const std::filesystem::path& dataset,
                      const std::optional<std::filesystem::path>& prototypes,
                      const std::filesystem::path& out_dir, std::ostream& log);
ScoreReport run_eval(const RunConfig& cfg, const std::filesystem::path& dataset,
                     const std::filesystem::path& checkpoint, BleuSmoothing smoothing,
                     const std::optional<std::filesystem::path>& feature_dump, std::ostream& out);
void run_translate(const RunConfig& cfg, const std::filesystem::path& dataset,
                   const std::filesystem::path& checkpoint, std::ostream& out);

std::string score_json(const ScoreReport& report);

}  // namespace m2slt
