#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "m2slt/numkit.hpp"

namespace m2slt {

struct EventPoint {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint64_t t = 0;  // microseconds
  std::int8_t p = 1;    // +1 ON, -1 OFF

  bool operator==(const EventPoint&) const = default;
};

struct EventStream {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<EventPoint> events;  // sorted by t, ties in input order

  bool operator==(const EventStream&) const = default;
};

// Checks bounds, polarity and timestamp order; throws on the first violation.
void validate(const EventStream& stream);

// EVT-TXT: "EVT1 W H" then one "x y t p" line per event; '#' lines are comments.
EventStream parse_event_file(const std::string& text);
std::string write_event_file(const EventStream& stream);

// EVT-BIN: "EVB1", u32 W, u32 H, u64 count, count × (u16 x, u16 y, u64 t, i8 p).
EventStream parse_event_bin(const std::string& bytes);
std::string write_event_bin(const EventStream& stream);

// Reads either format, dispatching on the leading magic.
EventStream load_events(const std::filesystem::path& path);
void save_events(const std::filesystem::path& path, const EventStream& stream, bool text);

// T×H×W×3 values in [0, 1]. frame_times holds T+1 bin edges for event-derived
// sequences and is empty otherwise.
struct FrameSequence {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;
  std::vector<std::uint64_t> frame_times;

  FrameSequence() = default;
  FrameSequence(std::size_t t, std::size_t h, std::size_t w);

  std::size_t frame_size() const { return height * width * 3; }
  float& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
    return data[((t * height + y) * width + x) * 3 + c];
  }
  float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return data[((t * height + y) * width + x) * 3 + c];
  }
  std::span<const float> frame(std::size_t t) const {
    return {data.data() + t * frame_size(), frame_size()};
  }
  // New sequence holding the given frames in the given order. Bin edges are dropped.
  FrameSequence select(std::span<const std::size_t> indices) const;

  bool operator==(const FrameSequence&) const = default;
};

// FRM1: "FRM1", u32 T, u32 H, u32 W, T·H·W·3 f32 little-endian (row-major).
std::string encode_frames(const FrameSequence& frames);
FrameSequence decode_frames(const std::string& bytes);

// Events per pixel per bin that saturate a channel.
inline constexpr double kSaturationCount = 5.0;

std::vector<std::uint64_t> uniform_bin_edges(std::uint64_t t_min, std::uint64_t t_max,
                                             std::size_t bins);
std::vector<std::uint64_t> periodic_bin_edges(std::uint64_t period_us, std::size_t bins);

// OFF counts in channel 0, ON counts in channel 2, scaled by 1/5 and clamped.
FrameSequence events_to_frames(const EventStream& stream, std::span<const std::uint64_t> bin_edges);
std::vector<std::size_t> event_count_per_frame(const EventStream& stream,
                                               std::span<const std::uint64_t> bin_edges);

struct PolarityCounts {
  std::vector<std::size_t> on;
  std::vector<std::size_t> off;
};
PolarityCounts polarity_count_per_frame(const EventStream& stream,
                                        std::span<const std::uint64_t> bin_edges);

using TokenSequence = std::vector<int>;

struct AlignedSample {
  FrameSequence rgb;
  FrameSequence evt;
  TokenSequence tokens;
  std::string meta;
};

// Wraps the sample; throws AlignmentError naming T, H or W on a shape mismatch.
AlignedSample align(FrameSequence rgb, FrameSequence evt, TokenSequence tokens,
                    std::string meta = {});

// Per-frame pooled descriptor: 3 channel means followed by a 4×4 grid of
// per-cell channel means (row-major cells, channel-minor), 51 values total.
inline constexpr std::size_t kDescriptorDim = 51;
Matrix frame_descriptors(const FrameSequence& frames);
Matrix frame_descriptors(const FrameSequence& frames, std::span<const std::size_t> indices);

}  // namespace m2slt
