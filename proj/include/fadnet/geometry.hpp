#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "fadnet/errors.hpp"

// Closed-form box geometry in the KITTI camera frame: x right, y down,
// z forward, yaw about +y. Decoders are templated on the scalar so the
// regression losses can differentiate through them with Jet.
namespace fadnet {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double u0 = 0.0;
  double v0 = 0.0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw GeometryError("intrinsics: focal lengths must be positive");
  }
  /// Pinhole projection; z must be positive.
  std::array<double, 2> project(double x, double y, double z) const {
    return {fx * x / z + u0, fy * y / z + v0};
  }
};

/// Center/size parameterization, pixels.
struct Box2D {
  double u = 0, v = 0, w = 0, h = 0;

  static Box2D from_ltrb(double l, double t, double r, double b) {
    return {(l + r) / 2, (t + b) / 2, r - l, b - t};
  }
  double left() const { return u - w / 2; }
  double right() const { return u + w / 2; }
  double top() const { return v - h / 2; }
  double bottom() const { return v + h / 2; }
};

/// Centroid, dimensions (meters) and yaw (radians).
struct Box3D {
  double x = 0, y = 0, z = 0;
  double H = 1, W = 1, L = 1;
  double theta = 0;
};

/// Per-category mean (H, W, L).
struct DimensionTemplate {
  std::vector<std::array<double, 3>> dims;

  const std::array<double, 3>& at(int category) const { return dims.at(static_cast<std::size_t>(category)); }
};

/// Heatmap peak: cell indices and the matching input-pixel location (4 * cell).
struct KeypointEstimate {
  int cell_u = 0;
  int cell_v = 0;
  int category = 0;
  double score = 0.0;

  double u() const { return 4.0 * cell_u; }
  double v() const { return 4.0 * cell_v; }
};

inline constexpr double kOutputStride = 4.0;

/// Wraps to (-pi, pi].
double wrap_angle(double a);

// ---- scalar-generic codec formulas ----

template <class T>
T decode_depth(const T& encoded) {
  using std::exp;
  // 1 / sigmoid(e) - 1 == exp(-e); the exponential form avoids cancellation.
  return exp(-encoded);
}

double encode_depth(double depth);

template <class T>
std::array<T, 2> decode_center2d(double kp_u, double kp_v, const T& du, const T& dv) {
  return {kp_u + du, kp_v + dv};
}

template <class T>
std::array<T, 3> decode_location3d_from_depth(double kp_u, double kp_v, const T& du, const T& dv,
                                              const T& z, const CameraIntrinsics& K) {
  return {z * (kp_u + du - K.u0) / K.fx, z * (kp_v + dv - K.v0) / K.fy, z};
}

template <class T>
std::array<T, 3> decode_dimensions(const std::array<double, 3>& tmpl, const T& dh, const T& dw,
                                   const T& dl) {
  using std::exp;
  return {tmpl[0] * exp(dh), tmpl[1] * exp(dw), tmpl[2] * exp(dl)};
}

/// Unwrapped yaw = atan2(sin, cos) + atan2(x, z).
template <class T>
T decode_yaw_unwrapped(const T& cos_a, const T& sin_a, const T& x, const T& z) {
  using std::atan2;
  return atan2(sin_a, cos_a) + atan2(x, z);
}

/// Eight corners of a yawed box: R(theta) * offset + center.
///
/// Offsets follow the KITTI devkit layout: length along x and width along z
/// at theta = 0. Corners 0-3 are the bottom face (y = +H/2), 4-7 the top face
/// (y = -H/2); within each face the order is (+L,+W), (+L,-W), (-L,-W), (-L,+W).
/// R = [[c, 0, s], [0, 1, 0], [-s, 0, c]], so theta = pi/2 sends +x to -z.
template <class T>
std::array<std::array<T, 3>, 8> box_corners(const T& x, const T& y, const T& z, const T& H,
                                            const T& W, const T& L, const T& theta) {
  using std::cos;
  using std::sin;
  static constexpr double sx[8] = {1, 1, -1, -1, 1, 1, -1, -1};
  static constexpr double sy[8] = {1, 1, 1, 1, -1, -1, -1, -1};
  static constexpr double sz[8] = {1, -1, -1, 1, 1, -1, -1, 1};
  const T c = cos(theta);
  const T s = sin(theta);
  std::array<std::array<T, 3>, 8> out;
  for (int i = 0; i < 8; ++i) {
    const T ox = L * (0.5 * sx[i]);
    const T oy = H * (0.5 * sy[i]);
    const T oz = W * (0.5 * sz[i]);
    out[i] = {c * ox + s * oz + x, oy + y, c * oz - s * ox + z};
  }
  return out;
}

// ---- double-precision API ----

std::array<double, 2> decode_center2d(const KeypointEstimate& kp, double du, double dv);
/// Throws GeometryError when the decoded depth is not positive.
std::array<double, 3> decode_location3d(const KeypointEstimate& kp, double du, double dv,
                                        double encoded_depth, const CameraIntrinsics& K);
std::array<double, 3> decode_dimensions(const DimensionTemplate& tmpl, int category, double dh,
                                        double dw, double dl);
/// Throws GeometryError on a zero angle pair. Result in (-pi, pi].
double decode_yaw(double cos_a, double sin_a, double x, double z);
/// Viewing angle of a yawed box: wrap(theta - atan2(x, z)).
double viewing_angle(double theta, double x, double z);

/// TL, TR, BL, BR.
std::array<std::array<double, 2>, 4> corners2d(const Box2D& box);
std::array<std::array<double, 3>, 8> corners3d(const Box3D& box);

/// Tight 2D box around the projected 3D corners, not clipped to the image.
/// Throws GeometryError if any corner has z <= 0.
Box2D remake_label_2d(const Box3D& box, const CameraIntrinsics& K);

}  // namespace fadnet
