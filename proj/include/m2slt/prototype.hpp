#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "m2slt/event_core.hpp"
#include "m2slt/numkit.hpp"

namespace m2slt {

struct WindowConfig {
  std::size_t window = 8;
  std::size_t stride = 2;
};

void validate(const WindowConfig& cfg);

struct Windows {
  std::vector<std::vector<std::size_t>> frame_indices;
  bool padded = false;  // the sequence was shorter than one window
};

Windows sliding_windows(const FrameSequence& frames, const WindowConfig& cfg);

// Turns a window of frames into a fixed-length vector.
class VideoEncoder {
 public:
  virtual ~VideoEncoder() = default;
  virtual std::size_t output_dim() const = 0;
  virtual std::vector<double> encode(const FrameSequence& frames,
                                     std::span<const std::size_t> window) const = 0;
};

// Pooled frame descriptors, averaged over the window, through a fixed
// seeded 2-layer MLP (51 → hidden → out, relu hidden, zero biases).
class ToyVideoEncoder final : public VideoEncoder {
 public:
  explicit ToyVideoEncoder(std::uint64_t seed, std::size_t out_dim = 64, std::size_t hidden = 64);

  std::size_t output_dim() const override { return net_.output_dim(); }
  std::vector<double> encode(const FrameSequence& frames,
                             std::span<const std::size_t> window) const override;
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
};

std::vector<double> encode_window(const FrameSequence& frames, std::span<const std::size_t> window,
                                  const VideoEncoder& encoder);

// Element-wise mean of paired rows.
Matrix macro_average(const Matrix& f_evt, const Matrix& f_rgb);

struct DbscanConfig {
  std::optional<double> eps;  // adaptive when unset
  std::size_t min_pts = 4;
};

void validate(const DbscanConfig& cfg);

inline constexpr int kNoise = -1;

// Core points have at least min_pts points (self included) within eps.
// Clusters are numbered in ascending order of their lowest core index.
std::vector<int> dbscan(const Matrix& points, double eps, std::size_t min_pts);

// Median over points of the distance to the min_pts-th nearest other point.
double adaptive_eps(const Matrix& points, std::size_t min_pts);

struct PrototypeSet {
  Matrix prototypes;               // C × D
  std::vector<std::size_t> sizes;  // members per prototype

  std::size_t count() const { return prototypes.rows(); }
  std::size_t dim() const { return prototypes.cols(); }
};

PrototypeSet build_prototypes(const Matrix& points, std::span<const int> labels);

struct ClusterResult {
  PrototypeSet prototypes;
  std::vector<int> labels;
  double eps = 0.0;
  std::size_t noise = 0;
};

// Resolves eps (adaptive or explicit), runs DBSCAN and builds centroids.
ClusterResult cluster_features(const Matrix& features, const DbscanConfig& cfg);

// Macro-averaged window features of one (already cropped) sample.
Matrix sample_window_features(const FrameSequence& rgb, const FrameSequence& evt,
                              const WindowConfig& cfg, const VideoEncoder& encoder);

}  // namespace m2slt
