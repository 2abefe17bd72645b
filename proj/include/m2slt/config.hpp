#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "m2slt/prototype.hpp"
#include "m2slt/segment.hpp"
#include "m2slt/synth.hpp"
#include "m2slt/translate.hpp"

namespace m2slt {

// Everything a CLI run needs. Every field has a default, so "{}" is a valid
// config; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  SegmentConfig segment;
  WindowConfig window;
  DbscanConfig dbscan;
  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;
  std::size_t n_samples = 20;
};

void validate(const RunConfig& cfg);

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// Full document with every field spelled out.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace m2slt
