#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "m2slt/event_core.hpp"
#include "m2slt/segment.hpp"

namespace m2slt {

// Layout of one synthetic sample: `idle` static frames, then for every token
// `active` frames of blob motion followed by `idle` static frames.
struct SynthSpec {
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t vocab_size = 30;  // including the 4 reserved ids
  std::size_t tokens_per_sample = 4;
  double blob_radius = 3.0;
  double min_speed = 2.0;  // pixels per frame
  double max_speed = 2.5;
  double noise_rate = 0.0;  // spurious events per frame per 1000 pixels
  std::size_t active_frames = 8;
  std::size_t idle_frames = 8;
  std::uint64_t frame_period_us = 40000;
  // Shortest active run any consumer will accept (SegmentConfig::alpha_min).
  std::size_t min_active_frames = 3;

  std::size_t frame_count() const {
    return idle_frames + tokens_per_sample * (active_frames + idle_frames);
  }
};

void validate(const SynthSpec& spec);

inline constexpr double kContrastThreshold = 0.05;
inline constexpr double kBackgroundLevel = 0.2;
inline constexpr double kBlobLevel = 0.8;

// Per-token trajectory parameters; injective in the token id.
struct Trajectory {
  int shape = 0;  // 0 disc, 1 square, 2 diamond
  double radius = 0.0;
  double angle = 0.0;  // radians
  double speed = 0.0;  // pixels per frame
};

Trajectory token_trajectory(int token, const SynthSpec& spec);

struct SynthSample {
  AlignedSample sample;
  EventStream events;
  std::vector<std::uint64_t> bin_edges;
  std::vector<Proposal> segments;  // ground truth, one per token
};

SynthSample gen_sample(const SynthSpec& spec, std::uint64_t seed, std::string id = "sample");
// Sample i uses derive_seed(seed, i) and id "sample_%04d".
std::vector<SynthSample> gen_dataset(const SynthSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace m2slt
