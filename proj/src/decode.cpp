#include "fadnet/decode.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "fadnet/errors.hpp"

namespace fadnet {

std::vector<KeypointEstimate> extract_keypoints(const Tensor& heatmap, double threshold, std::size_t topk) {
  if (heatmap.rank() != 3) throw DimensionError("extract_keypoints: heatmap must be [C,H,W]");
  if (!(threshold > 0 && threshold < 1)) throw ParameterError("extract_keypoints: threshold must lie in (0,1)");
  if (topk < 1) throw ParameterError("extract_keypoints: topk must be >= 1");
  const long C = static_cast<long>(heatmap.dim(0)), H = static_cast<long>(heatmap.dim(1)),
             W = static_cast<long>(heatmap.dim(2));
  const auto val = [&](long c, long v, long u) {
    return heatmap.values()[static_cast<std::size_t>((c * H + v) * W + u)];
  };
  std::vector<KeypointEstimate> peaks;
  for (long c = 0; c < C; ++c) {
    for (long v = 0; v < H; ++v) {
      for (long u = 0; u < W; ++u) {
        const double p = val(c, v, u);
        if (!(p >= threshold)) continue;
        bool peak = true;
        for (long dv = -1; dv <= 1 && peak; ++dv) {
          for (long du = -1; du <= 1 && peak; ++du) {
            const long nu = u + du, nv = v + dv;
            if ((du == 0 && dv == 0) || nu < 0 || nv < 0 || nu >= W || nv >= H) continue;
            const double q = val(c, nv, nu);
            if (q > p || (q == p && std::tie(nu, nv) < std::tie(u, v))) peak = false;
          }
        }
        if (peak) peaks.push_back({static_cast<int>(u), static_cast<int>(v), static_cast<int>(c), p});
      }
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const KeypointEstimate& a, const KeypointEstimate& b) { return a.score > b.score; });
  if (peaks.size() > topk) peaks.resize(topk);
  return peaks;
}

DecodeResult decode_detections(const NetworkOutput& out, const std::vector<KeypointEstimate>& keypoints,
                               const CameraIntrinsics& K, const DimensionTemplate& dims) {
  const Tensor& m2 = out.group(Group::box2d);
  const Tensor& mda = out.group(Group::dim_angle);
  const Tensor& mo = out.group(Group::offset3d);
  const Tensor& md = out.group(Group::depth);
  const std::size_t H = m2.dim(1), W = m2.dim(2);
  const auto at = [&](const Tensor& t, std::size_t c, const KeypointEstimate& kp) {
    return t.values()[(c * H + static_cast<std::size_t>(kp.cell_v)) * W + static_cast<std::size_t>(kp.cell_u)];
  };

  DecodeResult res;
  for (const auto& kp : keypoints) {
    if (kp.cell_u < 0 || kp.cell_v < 0 || static_cast<std::size_t>(kp.cell_u) >= W ||
        static_cast<std::size_t>(kp.cell_v) >= H) {
      throw DimensionError("decode_detections: keypoint outside the output maps");
    }
    Detection d;
    d.category = kp.category;
    d.score = kp.score;
    const auto c2 = decode_center2d(kp, at(m2, 0, kp), at(m2, 1, kp));
    d.box2d = {c2[0], c2[1], std::abs(at(m2, 2, kp)), std::abs(at(m2, 3, kp))};
    try {
      const auto loc = decode_location3d(kp, at(mo, 0, kp), at(mo, 1, kp), at(md, 0, kp), K);
      const auto dim = decode_dimensions(dims, kp.category, at(mda, 0, kp), at(mda, 1, kp), at(mda, 2, kp));
      const double ca = at(mda, 3, kp), sa = at(mda, 4, kp);
      const double theta = decode_yaw(ca, sa, loc[0], loc[2]);
      if (!std::isfinite(loc[2]) || !std::isfinite(dim[0] * dim[1] * dim[2])) throw GeometryError("non-finite");
      d.box3d = {loc[0], loc[1], loc[2], dim[0], dim[1], dim[2], theta};
      d.alpha = wrap_angle(std::atan2(sa, ca));
    } catch (const GeometryError&) {
      ++res.dropped;
      continue;
    }
    res.detections.push_back(d);
  }
  return res;
}

std::vector<ObjectLabel> detections_to_labels(const std::vector<Detection>& dets,
                                              const std::vector<std::string>& categories) {
  std::vector<ObjectLabel> rows;
  rows.reserve(dets.size());
  for (const auto& d : dets) {
    ObjectLabel o;
    o.type = categories.at(static_cast<std::size_t>(d.category));
    o.truncated = -1;
    o.occluded = -1;
    o.alpha = d.alpha;
    o.set_box2d(d.box2d);
    o.set_box3d(d.box3d);
    o.score = d.score;
    rows.push_back(o);
  }
  return rows;
}

std::vector<Detection> labels_to_detections(const std::vector<ObjectLabel>& rows,
                                            const std::vector<std::string>& categories) {
  std::vector<Detection> dets;
  for (const auto& r : rows) {
    const int cat = category_index(categories, r.type);
    if (cat < 0) continue;
    dets.push_back({cat, r.score.value_or(1.0), r.box2d(), r.box3d(), r.alpha});
  }
  return dets;
}

}  // namespace fadnet
