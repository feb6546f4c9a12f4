#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fadnet/kitti.hpp"
#include "fadnet/synthetic.hpp"
#include "fadnet/targets.hpp"
#include "fadnet/tensor.hpp"

namespace fadnet {

/// A frame ready for training or inference at the model resolution.
struct Sample {
  KittiFrame frame;      // intrinsics already scaled to the model resolution
  Tensor image;          // [3, H, W], standardized
  TrainingTargets targets;
};

struct Dataset {
  std::vector<Sample> samples;
  TargetConfig target_config;
  ImageNormalizer normalizer;

  std::size_t size() const { return samples.size(); }
};

/// Builds targets and standardizes images. Dimension templates come from
/// `tcfg.dims` when set, otherwise from the frames themselves; the
/// normalizer is fitted on the images unless one is supplied.
Dataset make_dataset(std::vector<KittiFrame> frames, std::vector<Tensor> raw_images, TargetConfig tcfg,
                     std::optional<ImageNormalizer> normalizer = std::nullopt);

Dataset synthetic_dataset(std::uint64_t seed, std::size_t n_frames, std::size_t objects_per_frame,
                          const SyntheticConfig& scfg);

/// Whether PNG decoding was compiled in.
bool png_support();

/// [3, h, w] in [0, 1]. Throws ParseError when the file cannot be decoded
/// and ContractError when PNG support is not compiled in.
Tensor read_png(const std::filesystem::path& path);

/// Bilinear resize with half-pixel centers.
Tensor resize_image(const Tensor& image, std::size_t height, std::size_t width);

/// Intrinsics for an image resampled from (src_h, src_w) to (dst_h, dst_w).
CameraIntrinsics scale_intrinsics(const CameraIntrinsics& K, double src_h, double src_w, double dst_h,
                                  double dst_w);

/// Frames of a KITTI-layout directory with images at the model resolution.
/// <root>/image_2/<id>.png is used when present and PNG support is enabled;
/// otherwise the image is rendered from the labels like a synthetic scene.
struct LoadedFrames {
  std::vector<KittiFrame> frames;
  std::vector<Tensor> images;
  std::size_t rendered = 0;
};
LoadedFrames load_frames(const std::filesystem::path& root, int height, int width,
                         const std::vector<std::string>& categories);

/// `explicit_dir` if given, else $FADNET_DATA_DIR. Throws ParameterError when neither is set.
std::filesystem::path resolve_data_dir(const std::optional<std::filesystem::path>& explicit_dir);

}  // namespace fadnet
