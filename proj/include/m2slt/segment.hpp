#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "m2slt/event_core.hpp"

namespace m2slt {

struct SegmentConfig {
  // Foreground-pixel threshold for the RGB branch; mean(r_t) when unset.
  std::optional<double> theta_r;
  std::size_t alpha_min = 3;
  double pixel_thresh = 0.1;
  std::size_t gap_merge = 2;
};

void validate(const SegmentConfig& cfg);

enum class ProposalSource { rgb, event, merged };
std::string to_string(ProposalSource s);

struct Proposal {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive
  ProposalSource source = ProposalSource::merged;

  std::size_t length() const { return end - start + 1; }
  bool operator==(const Proposal&) const = default;
};

// Foreground pixel count per frame against the per-pixel temporal median of luminance.
std::vector<std::size_t> motion_intensity(const FrameSequence& rgb, double pixel_thresh = 0.1);

double auto_theta_r(std::span<const std::size_t> r);

std::vector<Proposal> rgb_proposals(std::span<const std::size_t> r, const SegmentConfig& cfg);

double adaptive_event_threshold(std::span<const std::size_t> e, std::size_t frames);

std::vector<Proposal> event_proposals(std::span<const std::size_t> e, const SegmentConfig& cfg);

// Maximal runs with value > theta lasting at least alpha_min frames.
std::vector<Proposal> threshold_runs(std::span<const double> values, double theta,
                                     std::size_t alpha_min, ProposalSource source);

// Event proposals validated against RGB proposals, then gap-merged.
std::vector<Proposal> merge_proposals(std::span<const Proposal> a_rgb,
                                      std::span<const Proposal> a_evt, const SegmentConfig& cfg);

struct CropResult {
  AlignedSample sample;
  std::vector<std::size_t> kept_frames;
  bool fell_back = false;  // set when no proposal was given and the full sample is returned
};

CropResult crop_sample(const AlignedSample& sample, std::span<const Proposal> proposals);

struct SegmentResult {
  std::vector<std::size_t> motion;
  std::vector<std::size_t> event_counts;
  std::vector<Proposal> rgb;
  std::vector<Proposal> event;
  std::vector<Proposal> merged;
};

// Runs both branches and the merge for one sample.
SegmentResult segment_sample(const FrameSequence& rgb, const EventStream& events,
                             std::span<const std::uint64_t> bin_edges, const SegmentConfig& cfg);

// Intersection-over-union of the frame sets covered by two proposal lists.
double temporal_iou(std::span<const Proposal> a, std::span<const Proposal> b);

}  // namespace m2slt
