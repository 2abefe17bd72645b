#pragma once

#include <algorithm>

#include "m2slt/event_core.hpp"
#include "m2slt/numkit.hpp"

namespace testing {

inline m2slt::EventStream random_stream(m2slt::Rng& rng, std::size_t n, std::uint32_t w = 16,
                                        std::uint32_t h = 12, std::uint64_t t_max = 100000) {
  m2slt::EventStream s;
  s.width = w;
  s.height = h;
  for (std::size_t i = 0; i < n; ++i)
    s.events.push_back({static_cast<std::uint32_t>(rng.below(w)),
                        static_cast<std::uint32_t>(rng.below(h)), rng.below(t_max),
                        static_cast<std::int8_t>(rng.below(2) ? 1 : -1)});
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  return s;
}

inline m2slt::Matrix random_matrix(m2slt::Rng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                                   double hi = 1.0) {
  m2slt::Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline m2slt::FrameSequence random_frames(m2slt::Rng& rng, std::size_t t, std::size_t h,
                                          std::size_t w) {
  m2slt::FrameSequence f(t, h, w);
  for (float& v : f.data) v = static_cast<float>(rng.uniform());
  return f;
}

}  // namespace testing
