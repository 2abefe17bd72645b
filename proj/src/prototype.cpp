#include "m2slt/prototype.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "m2slt/error.hpp"

namespace m2slt {

void validate(const WindowConfig& cfg) {
  if (cfg.window < 1 || cfg.stride < 1) throw ConfigError("window: window and stride must be >= 1");
}

Windows sliding_windows(const FrameSequence& frames, const WindowConfig& cfg) {
  validate(cfg);
  if (frames.frames == 0) throw ArgumentError("sliding_windows: empty frame sequence");
  Windows out;
  if (frames.frames < cfg.window) {
    std::vector<std::size_t> idx(cfg.window);
    for (std::size_t i = 0; i < cfg.window; ++i) idx[i] = std::min(i, frames.frames - 1);
    out.frame_indices.push_back(std::move(idx));
    out.padded = true;
    return out;
  }
  for (std::size_t start = 0; start + cfg.window <= frames.frames; start += cfg.stride) {
    std::vector<std::size_t> idx(cfg.window);
    for (std::size_t i = 0; i < cfg.window; ++i) idx[i] = start + i;
    out.frame_indices.push_back(std::move(idx));
  }
  return out;
}

ToyVideoEncoder::ToyVideoEncoder(std::uint64_t seed, std::size_t out_dim, std::size_t hidden) {
  Rng rng(seed);
  net_ = Mlp({kDescriptorDim, hidden, out_dim}, rng);
}

std::vector<double> ToyVideoEncoder::encode(const FrameSequence& frames,
                                            std::span<const std::size_t> window) const {
  if (window.empty()) throw ArgumentError("encode_window: empty window");
  const Matrix pooled = mean_rows(frame_descriptors(frames, window));
  const Matrix out = mlp_forward(net_, pooled);
  return out.data();
}

std::vector<double> encode_window(const FrameSequence& frames, std::span<const std::size_t> window,
                                  const VideoEncoder& encoder) {
  if (frames.height < 4 || frames.width < 4)
    throw ArgumentError("encode_window: encoder needs frames of at least 4x4 pixels");
  return encoder.encode(frames, window);
}

Matrix macro_average(const Matrix& f_evt, const Matrix& f_rgb) {
  if (!f_evt.same_shape(f_rgb)) {
    throw ArgumentError("macro_average: shape mismatch " + shape_string(f_evt) + " vs " +
                        shape_string(f_rgb));
  }
  Matrix out(f_evt.rows(), f_evt.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = 0.5 * (f_evt.data()[i] + f_rgb.data()[i]);
  return out;
}

void validate(const DbscanConfig& cfg) {
  if (cfg.min_pts < 1) throw ConfigError("dbscan: min_pts must be >= 1");
  if (cfg.eps && !(*cfg.eps > 0.0)) throw ConfigError("dbscan: eps must be positive");
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<int> dbscan(const Matrix& points, double eps, std::size_t min_pts) {
  const std::size_t n = points.rows();
  const double eps2 = eps * eps;
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbors[i].push_back(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (squared_distance(points.row(i), points.row(j)) <= eps2) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }
  for (auto& nb : neighbors) std::sort(nb.begin(), nb.end());

  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = neighbors[i].size() >= min_pts;

  std::vector<int> labels(n, kNoise);
  int next = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || labels[seed] != kNoise) continue;
    const int id = next++;
    labels[seed] = id;
    std::deque<std::size_t> frontier{seed};
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      for (std::size_t q : neighbors[p]) {
        if (labels[q] != kNoise) continue;
        labels[q] = id;
        if (core[q]) frontier.push_back(q);
      }
    }
  }
  return labels;
}

double adaptive_eps(const Matrix& points, std::size_t min_pts) {
  const std::size_t n = points.rows();
  if (min_pts < 1 || n <= min_pts)
    throw ArgumentError("adaptive_eps: need more than min_pts points");
  std::vector<double> kth(n);
  std::vector<double> d(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d[m++] = squared_distance(points.row(i), points.row(j));
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(min_pts - 1), d.end());
    kth[i] = std::sqrt(d[min_pts - 1]);
  }
  std::sort(kth.begin(), kth.end());
  return n % 2 == 1 ? kth[n / 2] : 0.5 * (kth[n / 2 - 1] + kth[n / 2]);
}

PrototypeSet build_prototypes(const Matrix& points, std::span<const int> labels) {
  if (labels.size() != points.rows())
    throw ArgumentError("build_prototypes: one label per point required");
  int max_label = kNoise;
  for (int l : labels) max_label = std::max(max_label, l);
  if (max_label == kNoise) {
    throw EmptyPrototypeError(
        "every point was labelled noise; no prototypes formed (widen eps or lower min_pts)");
  }
  const std::size_t c = static_cast<std::size_t>(max_label) + 1;
  PrototypeSet set{Matrix(c, points.cols()), std::vector<std::size_t>(c, 0)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) continue;
    const auto l = static_cast<std::size_t>(labels[i]);
    ++set.sizes[l];
    auto dst = set.prototypes.row(l);
    const auto src = points.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  for (std::size_t l = 0; l < c; ++l) {
    if (set.sizes[l] == 0) throw ArgumentError("build_prototypes: cluster ids are not contiguous");
    for (double& v : set.prototypes.row(l)) v /= static_cast<double>(set.sizes[l]);
  }
  return set;
}

ClusterResult cluster_features(const Matrix& features, const DbscanConfig& cfg) {
  validate(cfg);
  if (features.rows() == 0) throw DataError("cluster: no window features to cluster");
  ClusterResult res;
  if (cfg.eps) {
    res.eps = *cfg.eps;
  } else {
    res.eps = adaptive_eps(features, cfg.min_pts);
    if (!(res.eps > 0.0))
      throw DataError("cluster: adaptive eps is zero (all features identical); set eps explicitly");
  }
  res.labels = dbscan(features, res.eps, cfg.min_pts);
  res.noise = static_cast<std::size_t>(std::count(res.labels.begin(), res.labels.end(), kNoise));
  res.prototypes = build_prototypes(features, res.labels);
  return res;
}

Matrix sample_window_features(const FrameSequence& rgb, const FrameSequence& evt,
                              const WindowConfig& cfg, const VideoEncoder& encoder) {
  const Windows windows = sliding_windows(rgb, cfg);
  Matrix f_rgb(windows.frame_indices.size(), encoder.output_dim());
  Matrix f_evt(windows.frame_indices.size(), encoder.output_dim());
  for (std::size_t w = 0; w < windows.frame_indices.size(); ++w) {
    const auto a = encode_window(rgb, windows.frame_indices[w], encoder);
    const auto b = encode_window(evt, windows.frame_indices[w], encoder);
    std::copy(a.begin(), a.end(), f_rgb.row(w).begin());
    std::copy(b.begin(), b.end(), f_evt.row(w).begin());
  }
  return macro_average(f_evt, f_rgb);
}

}  // namespace m2slt
