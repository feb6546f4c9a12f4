#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fadnet/decode.hpp"
#include "fadnet/geometry.hpp"
#include "fadnet/kitti.hpp"

namespace fadnet {

/// Axis-aligned IoU; 0 when the union has zero area.
double iou_2d(const Box2D& a, const Box2D& b);
/// Rotated footprint IoU in the (x, z) plane.
double iou_bev(const Box3D& a, const Box3D& b);
/// Footprint intersection times vertical overlap, over the volume union.
double iou_3d(const Box3D& a, const Box3D& b);

/// Area of the intersection of two convex polygons (any orientation).
double convex_intersection_area(std::vector<std::array<double, 2>> subject,
                                std::vector<std::array<double, 2>> clip);
/// The four bottom-face corners of a box projected to (x, z).
std::vector<std::array<double, 2>> bev_footprint(const Box3D& box);

enum class Difficulty { easy = 0, moderate = 1, hard = 2, ignored = 3 };
const char* difficulty_name(Difficulty d);

/// Easiest KITTI level the object satisfies (min 2D height 40/25/25 px, max
/// occlusion 0/1/2, max truncation 0.15/0.30/0.50), judged on `remade2d`.
Difficulty difficulty_filter(const ObjectLabel& label, const Box2D& remade2d);

enum class MetricKind { box2d, bev, box3d, aos };
enum class Interpolation { r11, r40 };

struct EvalConfig {
  double iou_threshold = 0.7;
  MetricKind metric = MetricKind::box3d;
  Interpolation interpolation = Interpolation::r40;
  Difficulty difficulty = Difficulty::moderate;
  int category = 0;

  void validate() const;
};

struct GroundTruth {
  int category = -1;         // index into the evaluated categories, or -1
  int neighbor_of = -1;      // similar class (Van for Car, Person_sitting for Pedestrian): ignored
  bool dont_care = false;
  Difficulty level = Difficulty::easy;
  Box2D box2d;
  Box3D box3d;
  double alpha = 0.0;
};

/// Converts label rows. With intrinsics the 2D boxes (and difficulty
/// heights) come from the remade labels, otherwise from the rows as stored.
std::vector<GroundTruth> ground_truth_from_labels(const std::vector<ObjectLabel>& labels,
                                                  const std::vector<std::string>& categories,
                                                  const std::optional<CameraIntrinsics>& K = std::nullopt);

struct EvalImage {
  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truth;
};

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double similarity_precision = 0.0;  // orientation-similarity weighted
};

/// One point per distinct detection score, in descending score order.
/// Greedy matching per image: detections in descending score claim the
/// unmatched valid gt of highest IoU at or above the threshold. A detection
/// whose only qualifying match is an ignored gt, or that lies inside a
/// DontCare region, or is shorter than the difficulty's minimum height,
/// counts as neither TP nor FP. Equal scores are ordered by (image, index).
std::vector<PRPoint> precision_recall(const std::vector<EvalImage>& images, const EvalConfig& cfg);

/// Mean over recall samples of the max precision at recall >= r.
double interpolate_ap(const std::vector<PRPoint>& curve, Interpolation interp, bool similarity = false);

double average_precision(const std::vector<EvalImage>& images, const EvalConfig& cfg);
/// Average orientation similarity; matching uses 2D IoU as in the KITTI devkit.
double aos(const std::vector<EvalImage>& images, const EvalConfig& cfg);

struct DepthBucketStat {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_iou;  // absent when the bucket is empty
};

/// Mean IoU between each detection's 2D box and the remade 2D box of its 3D
/// box, bucketed by depth on left-closed intervals [b_i, b_{i+1}).
std::vector<DepthBucketStat> consistency_stat(const std::vector<Detection>& dets, const CameraIntrinsics& K,
                                              const std::vector<double>& boundaries = {0, 15, 30, 45});

struct RowBucketStat {
  int row_start = 0;
  std::size_t count = 0;
  double mean_depth = 0.0;
};

/// Mean depth of labels grouped by the 2D-box center row, floor(v / bucket)
/// * bucket. Only populated buckets are returned, in increasing row order.
std::vector<RowBucketStat> depth_row_stat(const std::vector<ObjectLabel>& labels, int row_bucket_px);

struct ReportRow {
  std::string metric;
  Difficulty difficulty = Difficulty::moderate;
  double threshold = 0.7;
  double value = 0.0;
};

std::string format_report_csv(const std::vector<ReportRow>& rows);

}  // namespace fadnet
