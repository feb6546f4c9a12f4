#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "fadnet/geometry.hpp"
#include "fadnet/kitti.hpp"
#include "fadnet/tensor.hpp"

namespace fadnet {

/// Supervision for one object, gathered at its keypoint cell.
struct ObjectTarget {
  int category = 0;
  std::size_t cell_u = 0;
  std::size_t cell_v = 0;
  std::array<double, 4> box2d{};     // du2d, dv2d, w, h
  std::array<double, 5> dim_angle{};  // dH, dW, dL, cos a, sin a
  std::array<double, 2> offset3d{};  // du3d, dv3d
  double encoded_depth = 0.0;
  double depth = 0.0;  // meters
  Box2D remade2d;
  Box3D box3d;
  std::size_t label_index = 0;  // position in the source frame's label list

  double kp_u() const { return kOutputStride * static_cast<double>(cell_u); }
  double kp_v() const { return kOutputStride * static_cast<double>(cell_v); }
};

struct TrainingTargets {
  Tensor heatmap;  // [C, H/4, W/4]
  std::vector<ObjectTarget> objects;
  std::vector<double> hint;      // [H/32] mean depth per row bin, meters
  std::vector<int> hint_mask;    // 1 where the bin holds at least one object center
  std::size_t excluded = 0;      // labels dropped (behind camera / outside image)
};

enum class HintBinning {
  box2d_center,     // vertical center of the remade 2D box
  projected_center  // projected 3D centroid
};

struct TargetConfig {
  int height = 384;
  int width = 1280;
  std::vector<std::string> categories = {"Car", "Pedestrian", "Cyclist"};
  DimensionTemplate dims;
  HintBinning binning = HintBinning::box2d_center;
  double min_overlap = 0.7;
};

/// CenterNet-style gaussian radius for a (height, width) box in heatmap cells.
double gaussian_radius(double height, double width, double min_overlap);

/// Splats exp(-(dx^2 + dy^2) / (2 sigma^2)), sigma = radius / 3, into one
/// channel with elementwise max. Radius 0 marks only the center cell.
void draw_gaussian(Tensor& heatmap, std::size_t channel, std::size_t cu, std::size_t cv, int radius);

/// Row bin of an input-pixel vertical coordinate; v >= H maps to the last bin.
std::size_t hint_bin(double v, int height);

TrainingTargets build_targets(const KittiFrame& frame, const TargetConfig& cfg);

}  // namespace fadnet
