#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fadnet/geometry.hpp"
#include "fadnet/kitti.hpp"
#include "fadnet/model.hpp"
#include "fadnet/tensor.hpp"

namespace fadnet {

struct Detection {
  int category = 0;
  double score = 0.0;
  Box2D box2d;
  Box3D box3d;
  double alpha = 0.0;
};

/// 3x3 local maxima of the heatmap at or above `threshold`, sorted by score
/// descending and truncated to `topk`. Within a plateau only the
/// lexicographically smallest (c, u, v) cell counts as a peak.
std::vector<KeypointEstimate> extract_keypoints(const Tensor& heatmap, double threshold = 0.25,
                                                std::size_t topk = 100);

struct DecodeResult {
  std::vector<Detection> detections;
  std::size_t dropped = 0;  // degenerate decodes (non-positive depth, zero angle pair)
};

/// Full 2D/3D decode at each keypoint cell. Predicted w and h go through |.|.
DecodeResult decode_detections(const NetworkOutput& out, const std::vector<KeypointEstimate>& keypoints,
                               const CameraIntrinsics& K, const DimensionTemplate& dims);

/// Detections as KITTI result rows (truncation and occlusion written as -1).
std::vector<ObjectLabel> detections_to_labels(const std::vector<Detection>& dets,
                                              const std::vector<std::string>& categories);
/// Inverse of detections_to_labels; rows of unknown category are skipped.
std::vector<Detection> labels_to_detections(const std::vector<ObjectLabel>& rows,
                                            const std::vector<std::string>& categories);

}  // namespace fadnet
