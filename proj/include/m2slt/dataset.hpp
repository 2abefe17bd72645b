#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "m2slt/event_core.hpp"
#include "m2slt/segment.hpp"
#include "m2slt/synth.hpp"

namespace m2slt {

// On disk:
//   <dir>/manifest.json   {"frame_period_us", "width", "height",
//                          "samples": [{"id", "tokens", "segments", "frames"}]}
//   <dir>/<id>/rgb.frm    FRM1
//   <dir>/<id>/events.evb EVT-BIN (or events.txt, EVT-TXT)
struct DatasetEntry {
  std::string id;
  TokenSequence tokens;
  std::vector<Proposal> segments;
  std::size_t frames = 0;
};

struct DatasetManifest {
  std::uint64_t frame_period_us = 40000;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<DatasetEntry> samples;
};

struct LoadedSample {
  AlignedSample sample;
  EventStream events;
  std::vector<std::uint64_t> bin_edges;
  std::vector<Proposal> segments;
};

void save_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples,
                  const SynthSpec& spec, bool text_events = false);

// A directory without a manifest is an empty dataset.
DatasetManifest load_manifest(const std::filesystem::path& dir);
LoadedSample load_sample(const std::filesystem::path& dir, const DatasetManifest& manifest,
                         const DatasetEntry& entry);
std::vector<LoadedSample> load_dataset(const std::filesystem::path& dir);

}  // namespace m2slt
