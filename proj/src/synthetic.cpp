#include "fadnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fadnet/errors.hpp"

namespace fadnet {
namespace {

double iou_ltrb(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

}  // namespace

CameraIntrinsics synthetic_intrinsics(int height, int width) {
  // KITTI P2 (721.5 px focal at 384 rows), scaled to the target height.
  const double s = static_cast<double>(height) / 384.0;
  return {721.5377 * s, 721.5377 * s, width / 2.0, 172.854 * s};
}

Tensor render_scene(const KittiFrame& frame, const SyntheticConfig& cfg) {
  const auto H = static_cast<std::size_t>(cfg.height), W = static_cast<std::size_t>(cfg.width);
  Tensor img(Shape{3, H, W}, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t x = 0; x < W; ++x) img.at(c, y, x) = 0.1 * static_cast<double>(y) / static_cast<double>(H);

  std::vector<std::size_t> order(frame.objects.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frame.objects[a].z > frame.objects[b].z; });
  for (std::size_t idx : order) {
    const auto& o = frame.objects[idx];
    const int cat = category_index(cfg.categories, o.type);
    if (cat < 0) continue;
    const double shade = 1.0 - 0.8 * (o.z - cfg.min_depth) / (cfg.max_depth - cfg.min_depth);
    const double ca = std::cos(o.alpha), sa = std::sin(o.alpha);
    const long l = std::max(0L, static_cast<long>(std::floor(o.left)));
    const long r = std::min(static_cast<long>(W) - 1, static_cast<long>(std::ceil(o.right)));
    const long t = std::max(0L, static_cast<long>(std::floor(o.top)));
    const long b = std::min(static_cast<long>(H) - 1, static_cast<long>(std::ceil(o.bottom)));
    const double span = std::max(1.0, o.right - o.left);
    const auto c0 = static_cast<std::size_t>(cat);
    for (long y = t; y <= b; ++y) {
      for (long x = l; x <= r; ++x) {
        const double ramp = 2.0 * ((x + 0.5) - o.left) / span - 1.0;  // [-1, 1] across the box
        img.at(c0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = shade;
        img.at((c0 + 1) % 3, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 0.5 + 0.4 * ca * ramp;
        img.at((c0 + 2) % 3, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 0.5 + 0.4 * sa * ramp;
      }
    }
  }
  return img;
}

std::vector<SyntheticScene> generate_synthetic(std::uint64_t seed, std::size_t n_frames,
                                               std::size_t objects_per_frame, const SyntheticConfig& cfg) {
  if (n_frames < 1) throw ParameterError("generate_synthetic: n_frames must be >= 1");
  if (cfg.base_dims.size() != cfg.categories.size()) {
    throw ParameterError("generate_synthetic: base_dims must match categories");
  }
  const CameraIntrinsics K = synthetic_intrinsics(cfg.height, cfg.width);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick_cat(0, static_cast<int>(cfg.categories.size()) - 1);

  std::vector<SyntheticScene> scenes;
  for (std::size_t f = 0; f < n_frames; ++f) {
    KittiFrame frame;
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", f);
    frame.id = id;
    frame.intrinsics = K;
    std::vector<std::pair<std::size_t, std::size_t>> used_cells;
    for (std::size_t k = 0; k < objects_per_frame; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
        const int cat = pick_cat(rng);
        const auto& base = cfg.base_dims[static_cast<std::size_t>(cat)];
        Box3D box;
        box.H = base[0] * (0.8 + 0.4 * unit(rng));
        box.W = base[1] * (0.8 + 0.4 * unit(rng));
        box.L = base[2] * (0.8 + 0.4 * unit(rng));
        box.z = cfg.min_depth + (cfg.max_depth - cfg.min_depth) * unit(rng);
        const double u = cfg.width * (0.05 + 0.9 * unit(rng));
        box.x = (u - K.u0) * box.z / K.fx;
        box.y = cfg.camera_height - box.H / 2 + 0.2 * (2 * unit(rng) - 1);
        box.theta = wrap_angle(std::numbers::pi * (2 * unit(rng) - 1));
        if (box.theta == -std::numbers::pi) box.theta = std::numbers::pi;

        const auto p = K.project(box.x, box.y, box.z);
        if (p[0] < 0 || p[1] < 0 || p[0] >= cfg.width || p[1] >= cfg.height) continue;
        Box2D remade;
        try {
          remade = remake_label_2d(box, K);
        } catch (const GeometryError&) {
          continue;
        }
        const std::pair<std::size_t, std::size_t> cell{static_cast<std::size_t>(p[0] / 4),
                                                       static_cast<std::size_t>(p[1] / 4)};
        bool clash = false;
        for (std::size_t j = 0; j < frame.objects.size() && !clash; ++j) {
          clash = iou_ltrb(frame.objects[j].box2d(), remade) > 0.3 ||
                  (std::abs(static_cast<long>(used_cells[j].first) - static_cast<long>(cell.first)) <= 1 &&
                   std::abs(static_cast<long>(used_cells[j].second) - static_cast<long>(cell.second)) <= 1);
        }
        if (clash) continue;

        ObjectLabel o;
        o.type = cfg.categories[static_cast<std::size_t>(cat)];
        o.set_box3d(box);
        o.set_box2d(remade);
        o.alpha = viewing_angle(box.theta, box.x, box.z);
        const double vis_w = std::min<double>(remade.right(), cfg.width) - std::max(remade.left(), 0.0);
        const double vis_h = std::min<double>(remade.bottom(), cfg.height) - std::max(remade.top(), 0.0);
        o.truncated = std::clamp(1.0 - (vis_w * vis_h) / (remade.w * remade.h), 0.0, 1.0);
        o.occluded = 0;
        frame.objects.push_back(o);
        used_cells.push_back(cell);
        placed = true;
      }
      if (!placed) {
        throw GeometryError("generate_synthetic: could not place object " + std::to_string(k) + " in frame " +
                            frame.id + " after " + std::to_string(cfg.max_retries) + " attempts");
      }
    }
    SyntheticScene s;
    s.image = render_scene(frame, cfg);
    s.frame = std::move(frame);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

ImageNormalizer ImageNormalizer::fit(const std::vector<Tensor>& images) {
  ImageNormalizer n;
  std::array<double, 3> sum{}, sq{};
  double count = 0;
  for (const auto& img : images) {
    const std::size_t hw = img.dim(1) * img.dim(2);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = img.values()[c * hw + i];
        sum[c] += v;
        sq[c] += v * v;
      }
    count += static_cast<double>(hw);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    n.mean[c] = sum[c] / count;
    n.stddev[c] = std::sqrt(std::max(sq[c] / count - n.mean[c] * n.mean[c], 1e-12));
  }
  return n;
}

Tensor ImageNormalizer::apply(const Tensor& image) const {
  Tensor out = image.clone();
  const std::size_t hw = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hw; ++i) out.values()[c * hw + i] = (out.values()[c * hw + i] - mean[c]) / stddev[c];
  return out;
}

}  // namespace fadnet
