#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fadnet/geometry.hpp"

namespace fadnet {

/// One row of a KITTI object label (or result) file.
///
/// `location` is stored as in the file: the bottom-face center of the 3D box.
/// box3d() converts to the centroid used everywhere else.
struct ObjectLabel {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  double left = 0, top = 0, right = 0, bottom = 0;
  double height = 0, width = 0, length = 0;  // H, W, L in meters
  double x = 0, y = 0, z = 0;
  double rotation_y = 0.0;
  std::optional<double> score;

  bool dont_care() const { return type == "DontCare"; }
  Box2D box2d() const { return Box2D::from_ltrb(left, top, right, bottom); }
  Box3D box3d() const { return {x, y - height / 2, z, height, width, length, rotation_y}; }
  /// Fills location/dims/yaw from a centroid-parameterized box.
  void set_box3d(const Box3D& b);
  void set_box2d(const Box2D& b);
};

struct KittiFrame {
  std::string id;
  CameraIntrinsics intrinsics;
  std::vector<ObjectLabel> objects;
};

/// Ground-truth label text: exactly 15 fields per line.
std::vector<ObjectLabel> parse_label_file(const std::string& text);
/// Detection result text: 16 fields per line, score last.
std::vector<ObjectLabel> parse_result_file(const std::string& text);
/// Writes 15 fields, or 16 when the label carries a score.
std::string format_label_file(const std::vector<ObjectLabel>& labels);

/// Reads fx, fy, u0, v0 from the "P2:" row.
CameraIntrinsics parse_calib(const std::string& text);
std::string format_calib(const CameraIntrinsics& K);

/// Index of `type` in `categories`, or -1.
int category_index(const std::vector<std::string>& categories, const std::string& type);

/// Per-category mean (H, W, L) over all labels of that category.
DimensionTemplate dimension_templates(const std::vector<KittiFrame>& frames,
                                      const std::vector<std::string>& categories);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

/// 3DOP train/val split. When `ids` is exactly the 7481-frame KITTI training
/// range and `split_dir` holds train.txt / val.txt, the listed split is used.
/// Otherwise a seeded shuffle split: 3712 / 3769 on the full range, 50/50
/// elsewhere. Duplicate ids are rejected.
Split split_3dop(const std::vector<std::string>& ids, std::uint64_t seed,
                 const std::filesystem::path& split_dir = {});

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Reads <root>/label_2/<id>.txt and <root>/calib/<id>.txt for every label file.
std::vector<KittiFrame> load_kitti_dir(const std::filesystem::path& root);
void save_kitti_frame(const std::filesystem::path& root, const KittiFrame& frame);

}  // namespace fadnet
