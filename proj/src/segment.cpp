#include "m2slt/segment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "m2slt/error.hpp"

namespace m2slt {

void validate(const SegmentConfig& cfg) {
  if (cfg.alpha_min < 1) throw ConfigError("segment: alpha_min must be at least 1");
  if (!(cfg.pixel_thresh > 0.0)) throw ConfigError("segment: pixel_thresh must be positive");
  if (cfg.theta_r && !(*cfg.theta_r >= 0.0)) throw ConfigError("segment: theta_r must be >= 0");
}

std::string to_string(ProposalSource s) {
  switch (s) {
    case ProposalSource::rgb:
      return "rgb";
    case ProposalSource::event:
      return "event";
    case ProposalSource::merged:
      return "merged";
  }
  return "merged";
}

std::vector<std::size_t> motion_intensity(const FrameSequence& rgb, double pixel_thresh) {
  if (rgb.frames == 0) throw ArgumentError("motion_intensity: empty frame sequence");
  const std::size_t pixels = rgb.height * rgb.width;
  std::vector<double> lum(rgb.frames * pixels);
  for (std::size_t t = 0; t < rgb.frames; ++t) {
    const auto f = rgb.frame(t);
    for (std::size_t p = 0; p < pixels; ++p)
      lum[t * pixels + p] = (static_cast<double>(f[p * 3]) + f[p * 3 + 1] + f[p * 3 + 2]) / 3.0;
  }
  std::vector<double> background(pixels);
  std::vector<double> column(rgb.frames);
  const std::size_t mid = rgb.frames / 2;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t t = 0; t < rgb.frames; ++t) column[t] = lum[t * pixels + p];
    std::sort(column.begin(), column.end());
    background[p] = rgb.frames % 2 == 1 ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
  }
  std::vector<std::size_t> r(rgb.frames, 0);
  for (std::size_t t = 0; t < rgb.frames; ++t)
    for (std::size_t p = 0; p < pixels; ++p)
      if (std::abs(lum[t * pixels + p] - background[p]) > pixel_thresh) ++r[t];
  return r;
}

double auto_theta_r(std::span<const std::size_t> r) {
  if (r.empty()) return 0.0;
  return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
}

std::vector<Proposal> threshold_runs(std::span<const double> values, double theta,
                                     std::size_t alpha_min, ProposalSource source) {
  std::vector<Proposal> out;
  std::size_t t = 0;
  while (t < values.size()) {
    if (!(values[t] > theta)) {
      ++t;
      continue;
    }
    const std::size_t start = t;
    while (t < values.size() && values[t] > theta) ++t;
    if (t - start >= alpha_min) out.push_back({start, t - 1, source});
  }
  return out;
}

namespace {

std::vector<double> to_double(std::span<const std::size_t> v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

std::vector<Proposal> rgb_proposals(std::span<const std::size_t> r, const SegmentConfig& cfg) {
  const double theta = cfg.theta_r ? *cfg.theta_r : auto_theta_r(r);
  return threshold_runs(to_double(r), theta, cfg.alpha_min, ProposalSource::rgb);
}

double adaptive_event_threshold(std::span<const std::size_t> e, std::size_t frames) {
  if (frames == 0) throw ArgumentError("adaptive_event_threshold: T must be positive");
  if (e.size() != frames) throw ArgumentError("adaptive_event_threshold: expected T counts");
  return std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(frames);
}

std::vector<Proposal> event_proposals(std::span<const std::size_t> e, const SegmentConfig& cfg) {
  if (e.empty()) return {};
  const double theta = adaptive_event_threshold(e, e.size());
  return threshold_runs(to_double(e), theta, cfg.alpha_min, ProposalSource::event);
}

namespace {

void check_sorted_disjoint(std::span<const Proposal> list, const char* which) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].end < list[i].start)
      throw ArgumentError(std::string("merge_proposals: inverted interval in ") + which);
    if (i > 0 && list[i].start <= list[i - 1].end)
      throw ArgumentError(std::string("merge_proposals: overlapping or unsorted ") + which +
                          " proposals");
  }
}

bool intersects(const Proposal& a, const Proposal& b) {
  return a.start <= b.end && b.start <= a.end;
}

}  // namespace

std::vector<Proposal> merge_proposals(std::span<const Proposal> a_rgb,
                                      std::span<const Proposal> a_evt, const SegmentConfig& cfg) {
  check_sorted_disjoint(a_rgb, "rgb");
  check_sorted_disjoint(a_evt, "event");
  if (a_evt.empty()) return std::vector<Proposal>(a_rgb.begin(), a_rgb.end());

  std::vector<Proposal> kept;
  for (const auto& ev : a_evt) {
    const bool valid = a_rgb.empty() || std::any_of(a_rgb.begin(), a_rgb.end(),
                                                    [&](const Proposal& r) {
                                                      return intersects(ev, r);
                                                    });
    if (valid) kept.push_back({ev.start, ev.end, ProposalSource::merged});
  }

  std::vector<Proposal> merged;
  for (const auto& p : kept) {
    if (!merged.empty() && p.start - merged.back().end - 1 <= cfg.gap_merge) {
      merged.back().end = p.end;
    } else {
      merged.push_back(p);
    }
  }
  return merged;
}

CropResult crop_sample(const AlignedSample& sample, std::span<const Proposal> proposals) {
  const std::size_t T = sample.rgb.frames;
  CropResult out;
  if (proposals.empty()) {
    out.sample = sample;
    out.kept_frames.resize(T);
    std::iota(out.kept_frames.begin(), out.kept_frames.end(), 0);
    out.fell_back = true;
    return out;
  }
  std::vector<bool> keep(T, false);
  for (const auto& p : proposals) {
    if (p.start > p.end || p.end >= T)
      throw ArgumentError("crop_sample: proposal [" + std::to_string(p.start) + ", " +
                          std::to_string(p.end) + "] outside [0, " + std::to_string(T) + ")");
    for (std::size_t t = p.start; t <= p.end; ++t) keep[t] = true;
  }
  for (std::size_t t = 0; t < T; ++t)
    if (keep[t]) out.kept_frames.push_back(t);
  out.sample.rgb = sample.rgb.select(out.kept_frames);
  out.sample.evt = sample.evt.select(out.kept_frames);
  out.sample.tokens = sample.tokens;
  out.sample.meta = sample.meta;
  return out;
}

SegmentResult segment_sample(const FrameSequence& rgb, const EventStream& events,
                             std::span<const std::uint64_t> bin_edges, const SegmentConfig& cfg) {
  validate(cfg);
  if (bin_edges.size() != rgb.frames + 1)
    throw ArgumentError("segment_sample: need T+1 bin edges");
  SegmentResult res;
  res.motion = motion_intensity(rgb, cfg.pixel_thresh);
  res.event_counts = event_count_per_frame(events, bin_edges);
  res.rgb = rgb_proposals(res.motion, cfg);
  res.event = event_proposals(res.event_counts, cfg);
  res.merged = merge_proposals(res.rgb, res.event, cfg);
  return res;
}

double temporal_iou(std::span<const Proposal> a, std::span<const Proposal> b) {
  std::size_t hi = 0;
  for (const auto& p : a) hi = std::max(hi, p.end + 1);
  for (const auto& p : b) hi = std::max(hi, p.end + 1);
  std::vector<unsigned char> ma(hi, 0), mb(hi, 0);
  for (const auto& p : a)
    for (std::size_t t = p.start; t <= p.end; ++t) ma[t] = 1;
  for (const auto& p : b)
    for (std::size_t t = p.start; t <= p.end; ++t) mb[t] = 1;
  std::size_t inter = 0, uni = 0;
  for (std::size_t t = 0; t < hi; ++t) {
    inter += ma[t] & mb[t];
    uni += ma[t] | mb[t];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace m2slt
