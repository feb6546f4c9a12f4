#pragma once

#include <array>
#include <string>
#include <vector>

#include "fadnet/geometry.hpp"
#include "fadnet/model.hpp"
#include "fadnet/targets.hpp"
#include "fadnet/tensor.hpp"

namespace fadnet {

struct LossConfig {
  double alpha = 2.0;    // focal exponent on the prediction
  double beta = 4.0;     // focal exponent on the gaussian penalty reduction
  double gamma = 0.4;    // depth-aware exponent on the 2D term
  double lambda1 = 5.0;  // 2D regression
  double lambda2 = 2.0;  // 3D regression
  double lambda3 = 1.0;  // depth hint
  /// Heatmap predictions are clamped to [clamp, 1 - clamp] inside the log terms.
  double heatmap_clamp = 1e-4;
  /// Lower bound on decoded depth inside the 3D corner loss.
  double min_decoded_depth = 1e-3;
};

/// Which terms enter the total (stage-wise training switches terms off).
struct LossMask {
  bool keypoint = true;
  bool reg2d = true;
  bool reg3d = true;
  bool depth_hint = true;
};

/// Focal keypoint loss over the full heatmap, normalized by the object
/// count. N = 0 yields 0.
Tensor keypoint_loss(Tape& tape, const Tensor& pred, const Tensor& target, std::size_t num_objects,
                     const LossConfig& cfg = {});

/// Per-subset corner L1 of one object's 2D prediction: [offset, size].
/// Each term is the mean over the 4 corners of |du| + |dv|.
std::array<double, 2> reg2d_terms(const std::array<double, 4>& pred, const ObjectTarget& gt);

/// Per-subset corner L1 of one object's 3D prediction:
/// [angle, dimensions, offset, depth]. Each term is the mean over the 8
/// corners of |dx| + |dy| + |dz|.
struct Reg3dPrediction {
  std::array<double, 5> dim_angle{};
  std::array<double, 2> offset3d{};
  double encoded_depth = 0.0;
};
std::array<double, 4> reg3d_terms(const Reg3dPrediction& pred, const ObjectTarget& gt, const CameraIntrinsics& K,
                                  const DimensionTemplate& dims, const LossConfig& cfg = {});

/// d^gamma; throws DomainError for d <= 0.
double depth_aware_weight(double depth, double gamma);

/// Mean over objects of d^gamma * (sum of 2D subset terms), read from the
/// box2d map at each object's keypoint cell. Pass gamma = 0 for the plain loss.
Tensor disentangled_reg2d(Tape& tape, const Tensor& box2d_map, const std::vector<ObjectTarget>& objects,
                          double gamma);

/// Mean over objects of the summed 3D subset terms.
Tensor disentangled_reg3d(Tape& tape, const Tensor& dim_angle_map, const Tensor& offset_map,
                          const Tensor& depth_map, const std::vector<ObjectTarget>& objects,
                          const CameraIntrinsics& K, const DimensionTemplate& dims, const LossConfig& cfg = {});

/// Mean |target - pred| over bins with mask 1; zero when no bin is active.
Tensor depth_hint_loss(Tape& tape, const Tensor& pred, const std::vector<double>& target,
                       const std::vector<int>& mask);

struct LossParts {
  Tensor keypoint;
  Tensor reg2d;  // depth-aware
  Tensor reg3d;
  Tensor depth_hint;
};

/// keypoint + lambda1 * reg2d + lambda2 * reg3d + lambda3 * depth_hint over
/// the masked-in terms. Throws DivergenceError naming any non-finite term.
Tensor total_loss(Tape& tape, const LossParts& parts, const LossConfig& cfg = {}, const LossMask& mask = {});

/// All four parts for one image.
LossParts compute_losses(Tape& tape, const NetworkOutput& out, const TrainingTargets& targets,
                         const CameraIntrinsics& K, const DimensionTemplate& dims, const LossConfig& cfg = {});

}  // namespace fadnet
