#include "fadnet/targets.hpp"

#include <algorithm>
#include <cmath>

#include "fadnet/errors.hpp"

namespace fadnet {

double gaussian_radius(double height, double width, double min_overlap) {
  const double b1 = height + width;
  const double c1 = width * height * (1 - min_overlap) / (1 + min_overlap);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4 * c1)) / 2;

  const double a2 = 4;
  const double b2 = 2 * (height + width);
  const double c2 = (1 - min_overlap) * width * height;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 4 * a2 * c2)) / 2;

  const double a3 = 4 * min_overlap;
  const double b3 = -2 * min_overlap * (height + width);
  const double c3 = (min_overlap - 1) * width * height;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;
  return std::min({r1, r2, r3});
}

void draw_gaussian(Tensor& heatmap, std::size_t channel, std::size_t cu, std::size_t cv, int radius) {
  const long h = static_cast<long>(heatmap.dim(1));
  const long w = static_cast<long>(heatmap.dim(2));
  if (radius <= 0) {
    heatmap.at(channel, cv, cu) = 1.0;
    return;
  }
  const double sigma = radius / 3.0;
  for (long dy = -radius; dy <= radius; ++dy) {
    const long y = static_cast<long>(cv) + dy;
    if (y < 0 || y >= h) continue;
    for (long dx = -radius; dx <= radius; ++dx) {
      const long x = static_cast<long>(cu) + dx;
      if (x < 0 || x >= w) continue;
      const double g = std::exp(-static_cast<double>(dx * dx + dy * dy) / (2 * sigma * sigma));
      double& cell = heatmap.at(channel, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      cell = std::max(cell, g);
    }
  }
}

std::size_t hint_bin(double v, int height) {
  const long bins = height / 32;
  const long b = static_cast<long>(std::floor(v / 32.0));
  return static_cast<std::size_t>(std::clamp(b, 0L, bins - 1));
}

TrainingTargets build_targets(const KittiFrame& frame, const TargetConfig& cfg) {
  frame.intrinsics.validate();
  if (cfg.height % 32 != 0 || cfg.width % 32 != 0) throw GeometryError("targets: resolution not divisible by 32");
  const auto& K = frame.intrinsics;
  const std::size_t hh = static_cast<std::size_t>(cfg.height) / 4;
  const std::size_t ww = static_cast<std::size_t>(cfg.width) / 4;
  const std::size_t bins = static_cast<std::size_t>(cfg.height) / 32;

  TrainingTargets t;
  t.heatmap = Tensor(Shape{cfg.categories.size(), hh, ww}, 0.0);
  std::vector<double> depth_sum(bins, 0.0);
  std::vector<std::size_t> depth_count(bins, 0);

  for (std::size_t i = 0; i < frame.objects.size(); ++i) {
    const auto& label = frame.objects[i];
    const int cat = category_index(cfg.categories, label.type);
    if (label.dont_care() || cat < 0) continue;
    const Box3D box = label.box3d();
    if (!(box.z > 0)) {
      ++t.excluded;
      continue;
    }
    const auto proj = K.project(box.x, box.y, box.z);
    if (proj[0] < 0 || proj[1] < 0 || proj[0] >= cfg.width || proj[1] >= cfg.height) {
      ++t.excluded;
      continue;
    }
    Box2D remade;
    try {
      remade = remake_label_2d(box, K);
    } catch (const GeometryError&) {
      ++t.excluded;
      continue;
    }

    ObjectTarget o;
    o.category = cat;
    o.label_index = i;
    o.cell_u = static_cast<std::size_t>(std::floor(proj[0] / kOutputStride));
    o.cell_v = static_cast<std::size_t>(std::floor(proj[1] / kOutputStride));
    const double ku = o.kp_u(), kv = o.kp_v();
    o.box2d = {remade.u - ku, remade.v - kv, remade.w, remade.h};
    const auto& tmpl = cfg.dims.at(cat);
    const double alpha = viewing_angle(box.theta, box.x, box.z);
    o.dim_angle = {std::log(box.H / tmpl[0]), std::log(box.W / tmpl[1]), std::log(box.L / tmpl[2]),
                   std::cos(alpha), std::sin(alpha)};
    o.offset3d = {proj[0] - ku, proj[1] - kv};
    o.encoded_depth = encode_depth(box.z);
    o.depth = box.z;
    o.remade2d = remade;
    o.box3d = box;

    const double r = gaussian_radius(remade.h / kOutputStride, remade.w / kOutputStride, cfg.min_overlap);
    draw_gaussian(t.heatmap, static_cast<std::size_t>(cat), o.cell_u, o.cell_v,
                  std::max(0, static_cast<int>(r)));

    const double v_bin = cfg.binning == HintBinning::box2d_center ? remade.v : proj[1];
    const std::size_t b = hint_bin(v_bin, cfg.height);
    depth_sum[b] += box.z;
    ++depth_count[b];
    t.objects.push_back(o);
  }

  t.hint.assign(bins, 0.0);
  t.hint_mask.assign(bins, 0);
  for (std::size_t b = 0; b < bins; ++b) {
    if (depth_count[b] == 0) continue;
    t.hint[b] = depth_sum[b] / static_cast<double>(depth_count[b]);
    t.hint_mask[b] = 1;
  }
  return t;
}

}  // namespace fadnet
