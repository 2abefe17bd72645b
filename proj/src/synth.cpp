#include "m2slt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "m2slt/error.hpp"
#include "m2slt/numkit.hpp"
#include "m2slt/translate.hpp"

namespace m2slt {

namespace {

constexpr int kSubSteps = 4;  // sensor samples per frame, at t + 1/8, 3/8, 5/8, 7/8
// Square and diamond sizes chosen so all three shapes cover the disc's area.
constexpr double kSquareHalf = 0.886226925452758;  // sqrt(pi) / 2
constexpr double kShapeReach = 1.253314137315500;  // sqrt(pi / 2)

double max_radius(const SynthSpec& spec) { return spec.blob_radius; }

}  // namespace

void validate(const SynthSpec& spec) {
  if (spec.width < 8 || spec.height < 8) throw ConfigError("synth: resolution must be >= 8x8");
  if (spec.width > 65535 || spec.height > 65535)
    throw ConfigError("synth: resolution must fit EVT-BIN u16 coordinates");
  if (spec.vocab_size < 5) throw ConfigError("synth: vocab_size must leave at least one symbol");
  if (spec.tokens_per_sample > spec.vocab_size - 4)
    throw ConfigError("synth: tokens_per_sample exceeds the number of distinct symbols");
  if (spec.active_frames < std::max<std::size_t>(spec.min_active_frames, 1))
    throw ConfigError("synth: active_frames must be >= min_active_frames");
  if (!(spec.blob_radius > 0.0)) throw ConfigError("synth: blob_radius must be positive");
  if (!(spec.min_speed > 0.0) || spec.max_speed < spec.min_speed)
    throw ConfigError("synth: need 0 < min_speed <= max_speed");
  if (spec.noise_rate < 0.0) throw ConfigError("synth: noise_rate must be >= 0");
  if (spec.frame_period_us < 8) throw ConfigError("synth: frame_period_us too small");
  const double reach =
      0.5 * static_cast<double>(spec.active_frames) * spec.max_speed + kShapeReach * max_radius(spec);
  if (reach + 1.0 > 0.5 * static_cast<double>(std::min(spec.width, spec.height)))
    throw ConfigError("synth: trajectories would leave the frame; lower speed or radius");
}

Trajectory token_trajectory(int token, const SynthSpec& spec) {
  Trajectory tr;
  tr.shape = token % 3;
  tr.radius = spec.blob_radius;
  // Distinct angle per id below vocab_size keeps the mapping injective.
  tr.angle = 2.0 * std::numbers::pi * static_cast<double>(token) /
             static_cast<double>(spec.vocab_size);
  tr.speed = spec.min_speed +
             (spec.max_speed - spec.min_speed) * static_cast<double>((token * 5) % 7) / 6.0;
  return tr;
}

namespace {

struct Scene {
  const SynthSpec& spec;
  std::vector<int> tokens;
  std::vector<Trajectory> trajectories;

  std::size_t token_start(std::size_t j) const {
    return spec.idle_frames + j * (spec.active_frames + spec.idle_frames);
  }

  // Luminance image at time tau (in frames). The blob of token j is visible
  // during [a_j + 1/4, b_j + 3/4], i.e. inside frames a_j..b_j only.
  void render(double tau, std::vector<double>& img) const {
    std::fill(img.begin(), img.end(), kBackgroundLevel);
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      const double a = static_cast<double>(token_start(j));
      const double b = a + static_cast<double>(spec.active_frames) - 1.0;
      if (tau < a + 0.25 || tau > b + 0.75) continue;
      const Trajectory& tr = trajectories[j];
      const double progress = (tau - a) - 0.5 * static_cast<double>(spec.active_frames);
      const double cx = 0.5 * static_cast<double>(spec.width) + std::cos(tr.angle) * tr.speed * progress;
      const double cy = 0.5 * static_cast<double>(spec.height) + std::sin(tr.angle) * tr.speed * progress;
      for (std::size_t y = 0; y < spec.height; ++y) {
        const double dy = static_cast<double>(y) + 0.5 - cy;
        for (std::size_t x = 0; x < spec.width; ++x) {
          const double dx = static_cast<double>(x) + 0.5 - cx;
          bool inside = false;
          switch (tr.shape) {
            case 0:
              inside = dx * dx + dy * dy <= tr.radius * tr.radius;
              break;
            case 1:
              inside = std::max(std::abs(dx), std::abs(dy)) <= kSquareHalf * tr.radius;
              break;
            default:
              inside = std::abs(dx) + std::abs(dy) <= kShapeReach * tr.radius;
              break;
          }
          if (inside) img[y * spec.width + x] = kBlobLevel;
        }
      }
    }
  }
};

}  // namespace

SynthSample gen_sample(const SynthSpec& spec, std::uint64_t seed, std::string id) {
  validate(spec);
  Rng rng(seed);

  Scene scene{spec, {}, {}};
  std::vector<int> pool;
  for (std::size_t v = kFirstSymbol; v < spec.vocab_size; ++v) pool.push_back(static_cast<int>(v));
  for (std::size_t j = 0; j < spec.tokens_per_sample; ++j) {
    const std::size_t pick = j + rng.below(pool.size() - j);
    std::swap(pool[j], pool[pick]);
    scene.tokens.push_back(pool[j]);
    scene.trajectories.push_back(token_trajectory(pool[j], spec));
  }

  const std::size_t T = spec.frame_count();
  const std::size_t pixels = spec.width * spec.height;
  const double period = static_cast<double>(spec.frame_period_us);

  FrameSequence rgb(T, spec.height, spec.width);
  std::vector<double> img(pixels);
  for (std::size_t t = 0; t < T; ++t) {
    scene.render(static_cast<double>(t) + 0.5, img);
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = 0; c < 3; ++c) rgb.data[(t * pixels + p) * 3 + c] = static_cast<float>(img[p]);
  }

  EventStream events;
  events.width = static_cast<std::uint32_t>(spec.width);
  events.height = static_cast<std::uint32_t>(spec.height);
  std::vector<double> prev(pixels), cur(pixels);
  double prev_tau = 0.0;
  bool have_prev = false;
  for (std::size_t t = 0; t < T; ++t) {
    for (int s = 0; s < kSubSteps; ++s) {
      const double tau = static_cast<double>(t) + (2.0 * s + 1.0) / (2.0 * kSubSteps);
      scene.render(tau, cur);
      if (have_prev) {
        // Jitter stays inside the frame that owns the later sample.
        const double lo = std::max(prev_tau, static_cast<double>(t));
        for (std::size_t p = 0; p < pixels; ++p) {
          const double delta = cur[p] - prev[p];
          if (std::abs(delta) <= kContrastThreshold) continue;
          const double when = lo + rng.uniform() * (tau - lo);
          events.events.push_back({static_cast<std::uint32_t>(p % spec.width),
                                   static_cast<std::uint32_t>(p / spec.width),
                                   static_cast<std::uint64_t>(std::floor(when * period)),
                                   static_cast<std::int8_t>(delta > 0 ? 1 : -1)});
        }
      }
      std::swap(prev, cur);
      prev_tau = tau;
      have_prev = true;
    }
    if (spec.noise_rate > 0.0) {
      const std::size_t n = rng.poisson(spec.noise_rate * static_cast<double>(pixels) / 1000.0);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t p = rng.below(pixels);
        const auto when = static_cast<std::uint64_t>(t * spec.frame_period_us) +
                          rng.below(static_cast<std::size_t>(spec.frame_period_us));
        events.events.push_back({static_cast<std::uint32_t>(p % spec.width),
                                 static_cast<std::uint32_t>(p / spec.width), when,
                                 static_cast<std::int8_t>(rng.below(2) == 0 ? 1 : -1)});
      }
    }
  }
  std::stable_sort(events.events.begin(), events.events.end(),
                   [](const EventPoint& a, const EventPoint& b) { return a.t < b.t; });

  SynthSample out;
  out.bin_edges = periodic_bin_edges(spec.frame_period_us, T);
  FrameSequence evt = events_to_frames(events, out.bin_edges);
  out.events = std::move(events);
  out.sample = align(std::move(rgb), std::move(evt), scene.tokens, std::move(id));
  for (std::size_t j = 0; j < scene.tokens.size(); ++j) {
    const std::size_t a = scene.token_start(j);
    out.segments.push_back({a, a + spec.active_frames - 1, ProposalSource::merged});
  }
  return out;
}

std::vector<SynthSample> gen_dataset(const SynthSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("gen_dataset: need at least one sample");
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "sample_%04zu", i);
    out.push_back(gen_sample(spec, derive_seed(seed, i), id));
  }
  return out;
}

}  // namespace m2slt
