#include "fadnet/geometry.hpp"

#include <algorithm>
#include <limits>

namespace fadnet {

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double r = std::remainder(a, 2 * pi);  // [-pi, pi]
  if (r <= -pi) r += 2 * pi;
  return r;
}

double encode_depth(double depth) {
  if (!(depth > 0)) throw DomainError("encode_depth: depth must be positive, got " + std::to_string(depth));
  return -std::log(depth);
}

std::array<double, 2> decode_center2d(const KeypointEstimate& kp, double du, double dv) {
  return decode_center2d<double>(kp.u(), kp.v(), du, dv);
}

std::array<double, 3> decode_location3d(const KeypointEstimate& kp, double du, double dv,
                                        double encoded_depth, const CameraIntrinsics& K) {
  const double z = decode_depth(encoded_depth);
  if (!(z > 0) || !std::isfinite(z)) {
    throw GeometryError("decode_location3d: degenerate decoded depth " + std::to_string(z));
  }
  return decode_location3d_from_depth<double>(kp.u(), kp.v(), du, dv, z, K);
}

std::array<double, 3> decode_dimensions(const DimensionTemplate& tmpl, int category, double dh,
                                        double dw, double dl) {
  return decode_dimensions<double>(tmpl.at(category), dh, dw, dl);
}

double decode_yaw(double cos_a, double sin_a, double x, double z) {
  if (cos_a == 0.0 && sin_a == 0.0) throw GeometryError("decode_yaw: zero angle pair");
  return wrap_angle(decode_yaw_unwrapped<double>(cos_a, sin_a, x, z));
}

double viewing_angle(double theta, double x, double z) { return wrap_angle(theta - std::atan2(x, z)); }

std::array<std::array<double, 2>, 4> corners2d(const Box2D& b) {
  return {{{b.u - b.w / 2, b.v - b.h / 2},
           {b.u + b.w / 2, b.v - b.h / 2},
           {b.u - b.w / 2, b.v + b.h / 2},
           {b.u + b.w / 2, b.v + b.h / 2}}};
}

std::array<std::array<double, 3>, 8> corners3d(const Box3D& b) {
  return box_corners<double>(b.x, b.y, b.z, b.H, b.W, b.L, b.theta);
}

Box2D remake_label_2d(const Box3D& box, const CameraIntrinsics& K) {
  double l = std::numeric_limits<double>::infinity(), t = l;
  double r = -l, btm = -l;
  for (const auto& c : corners3d(box)) {
    if (!(c[2] > 0)) throw GeometryError("remake_label_2d: box corner behind the camera");
    const auto p = K.project(c[0], c[1], c[2]);
    l = std::min(l, p[0]);
    r = std::max(r, p[0]);
    t = std::min(t, p[1]);
    btm = std::max(btm, p[1]);
  }
  return Box2D::from_ltrb(l, t, r, btm);
}

}  // namespace fadnet
