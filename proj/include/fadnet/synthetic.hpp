#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fadnet/geometry.hpp"
#include "fadnet/kitti.hpp"
#include "fadnet/tensor.hpp"

namespace fadnet {

struct SyntheticConfig {
  int height = 64;
  int width = 128;
  std::vector<std::string> categories = {"Car", "Pedestrian", "Cyclist"};
  /// Base (H, W, L) per category; sampled dims stay within +-20%.
  std::vector<std::array<double, 3>> base_dims = {{1.53, 1.63, 3.88}, {1.76, 0.66, 0.84}, {1.74, 0.60, 1.76}};
  double min_depth = 3.0;
  double max_depth = 60.0;
  double camera_height = 1.65;
  int max_retries = 200;
};

/// KITTI-like intrinsics scaled to the configured resolution.
CameraIntrinsics synthetic_intrinsics(int height, int width);

/// A rendered toy frame. Each object paints its remade 2D footprint with a
/// depth-dependent intensity in its category channel and a horizontal ramp
/// keyed to its viewing angle in the other two; nearer objects paint last.
struct SyntheticScene {
  KittiFrame frame;
  Tensor image;  // [3, H, W], raw (not standardized)
};

/// Deterministic for a given seed. Throws GeometryError when an object
/// cannot be placed within the retry budget.
std::vector<SyntheticScene> generate_synthetic(std::uint64_t seed, std::size_t n_frames,
                                               std::size_t objects_per_frame, const SyntheticConfig& cfg);

/// Renders the labels of a frame into a raw image.
Tensor render_scene(const KittiFrame& frame, const SyntheticConfig& cfg);

/// Per-channel standardization constants computed at ingest.
struct ImageNormalizer {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> stddev{1, 1, 1};

  static ImageNormalizer fit(const std::vector<Tensor>& images);
  Tensor apply(const Tensor& image) const;
};

}  // namespace fadnet
