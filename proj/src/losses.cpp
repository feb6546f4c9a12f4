#include "fadnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fadnet/errors.hpp"
#include "fadnet/jet.hpp"
#include "fadnet/log.hpp"
#include "fadnet/ops.hpp"

namespace fadnet {
namespace {

template <class T>
T clamp_depth(const T& z, double floor) {
  if (value_of(z) < floor) return T(floor);
  return z;
}

// Corner-space L1 with sum over coordinates and mean over corners.
template <class T, std::size_t C, std::size_t D>
T corner_l1(const std::array<std::array<T, D>, C>& pred, const std::array<std::array<double, D>, C>& gt) {
  using std::abs;
  T acc(0.0);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t d = 0; d < D; ++d) acc += abs(pred[i][d] - gt[i][d]);
  return acc / static_cast<double>(C);
}

template <class T>
std::array<std::array<T, 2>, 4> box2d_corners(double kp_u, double kp_v, const T& du, const T& dv, const T& w,
                                              const T& h) {
  const auto c = decode_center2d<T>(kp_u, kp_v, du, dv);
  const T hw = w * 0.5, hh = h * 0.5;
  return {{{c[0] - hw, c[1] - hh}, {c[0] + hw, c[1] - hh}, {c[0] - hw, c[1] + hh}, {c[0] + hw, c[1] + hh}}};
}

// 2D terms with the prediction lifted to T and ground truth as constants.
template <class T>
std::array<T, 2> reg2d_terms_t(const std::array<T, 4>& p, const ObjectTarget& gt) {
  const auto& g = gt.box2d;
  const auto ref = box2d_corners<double>(gt.kp_u(), gt.kp_v(), g[0], g[1], g[2], g[3]);
  const auto off = box2d_corners<T>(gt.kp_u(), gt.kp_v(), p[0], p[1], T(g[2]), T(g[3]));
  const auto size = box2d_corners<T>(gt.kp_u(), gt.kp_v(), T(g[0]), T(g[1]), p[2], p[3]);
  return {corner_l1(off, ref), corner_l1(size, ref)};
}

struct Params3d {
  template <class T>
  struct Of {
    std::array<T, 5> da;
    std::array<T, 2> off;
    T enc;
  };
};

template <class T>
std::array<std::array<T, 3>, 8> decode_corners3d(const Params3d::Of<T>& p, const ObjectTarget& gt,
                                                 const CameraIntrinsics& K, const std::array<double, 3>& tmpl,
                                                 double min_depth) {
  const T z = clamp_depth(decode_depth(p.enc), min_depth);
  const auto loc = decode_location3d_from_depth<T>(gt.kp_u(), gt.kp_v(), p.off[0], p.off[1], z, K);
  const auto dims = decode_dimensions<T>(tmpl, p.da[0], p.da[1], p.da[2]);
  const T theta = decode_yaw_unwrapped<T>(p.da[3], p.da[4], loc[0], loc[2]);
  return box_corners<T>(loc[0], loc[1], loc[2], dims[0], dims[1], dims[2], theta);
}

template <class T>
std::array<T, 4> reg3d_terms_t(const Params3d::Of<T>& pred, const ObjectTarget& gt, const CameraIntrinsics& K,
                               const DimensionTemplate& dims, const LossConfig& cfg) {
  const auto& tmpl = dims.at(gt.category);
  Params3d::Of<double> g{gt.dim_angle, gt.offset3d, gt.encoded_depth};
  const auto ref = decode_corners3d<double>(g, gt, K, tmpl, cfg.min_decoded_depth);

  Params3d::Of<T> base;
  for (std::size_t i = 0; i < 5; ++i) base.da[i] = T(g.da[i]);
  for (std::size_t i = 0; i < 2; ++i) base.off[i] = T(g.off[i]);
  base.enc = T(g.enc);

  std::array<T, 4> out;
  {  // angle pair
    auto p = base;
    p.da[3] = pred.da[3];
    p.da[4] = pred.da[4];
    out[0] = corner_l1(decode_corners3d<T>(p, gt, K, tmpl, cfg.min_decoded_depth), ref);
  }
  {  // dimension offsets
    auto p = base;
    for (std::size_t i = 0; i < 3; ++i) p.da[i] = pred.da[i];
    out[1] = corner_l1(decode_corners3d<T>(p, gt, K, tmpl, cfg.min_decoded_depth), ref);
  }
  {  // projected-centroid offsets
    auto p = base;
    p.off = pred.off;
    out[2] = corner_l1(decode_corners3d<T>(p, gt, K, tmpl, cfg.min_decoded_depth), ref);
  }
  {  // encoded depth
    auto p = base;
    p.enc = pred.enc;
    out[3] = corner_l1(decode_corners3d<T>(p, gt, K, tmpl, cfg.min_decoded_depth), ref);
  }
  return out;
}

std::size_t flat_index(const Tensor& map, std::size_t ch, std::size_t cv, std::size_t cu) {
  return (ch * map.dim(1) + cv) * map.dim(2) + cu;
}

void check_cell(const Tensor& map, const ObjectTarget& o) {
  if (o.cell_v >= map.dim(1) || o.cell_u >= map.dim(2)) {
    throw DimensionError("object keypoint cell outside the regression map");
  }
}

}  // namespace

Tensor keypoint_loss(Tape& tape, const Tensor& pred, const Tensor& target, std::size_t num_objects,
                     const LossConfig& cfg) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("keypoint_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  if (num_objects == 0) {
    log_warning("keypoint_loss: image without objects, loss defined as 0");
    return Tensor::scalar(0.0);
  }
  const double inv_n = 1.0 / static_cast<double>(num_objects);
  const double lo = cfg.heatmap_clamp, hi = 1.0 - cfg.heatmap_clamp;
  const auto p = pred.values();
  const auto y = target.values();
  const bool track = tape.needs_grad({&pred});
  auto dloss = std::make_shared<std::vector<double>>(track ? p.size() : 0);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool clamped = p[i] < lo || p[i] > hi;
    const double q = std::clamp(p[i], lo, hi);
    double term = 0.0, dterm = 0.0;
    if (y[i] == 1.0) {
      term = std::pow(1 - q, cfg.alpha) * std::log(q);
      dterm = -cfg.alpha * std::pow(1 - q, cfg.alpha - 1) * std::log(q) + std::pow(1 - q, cfg.alpha) / q;
    } else {
      const double wneg = std::pow(1 - y[i], cfg.beta);
      term = wneg * std::pow(q, cfg.alpha) * std::log(1 - q);
      dterm = wneg * (cfg.alpha * std::pow(q, cfg.alpha - 1) * std::log(1 - q) - std::pow(q, cfg.alpha) / (1 - q));
    }
    acc += term;
    if (track) (*dloss)[i] = clamped ? 0.0 : -inv_n * dterm;
  }
  Tensor out = Tensor::scalar(-inv_n * acc);
  if (track) {
    tape.record("keypoint_loss", {pred}, out, [pred, out, dloss]() mutable {
      const double g = out.grad()[0];
      auto d = pred.grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * (*dloss)[i];
    });
  }
  return out;
}

std::array<double, 2> reg2d_terms(const std::array<double, 4>& pred, const ObjectTarget& gt) {
  return reg2d_terms_t<double>(pred, gt);
}

std::array<double, 4> reg3d_terms(const Reg3dPrediction& pred, const ObjectTarget& gt, const CameraIntrinsics& K,
                                  const DimensionTemplate& dims, const LossConfig& cfg) {
  Params3d::Of<double> p{pred.dim_angle, pred.offset3d, pred.encoded_depth};
  return reg3d_terms_t<double>(p, gt, K, dims, cfg);
}

double depth_aware_weight(double depth, double gamma) {
  if (!(depth > 0)) throw DomainError("depth_aware_weight: depth must be positive");
  return std::pow(depth, gamma);
}

Tensor disentangled_reg2d(Tape& tape, const Tensor& box2d_map, const std::vector<ObjectTarget>& objects,
                          double gamma) {
  if (box2d_map.rank() != 3 || box2d_map.dim(0) != 4) {
    throw DimensionError("disentangled_reg2d: expected a 4-channel map, got " + shape_str(box2d_map.shape()));
  }
  if (objects.empty()) return Tensor::scalar(0.0);
  using J = Jet<4>;
  const double inv_n = 1.0 / static_cast<double>(objects.size());
  auto idx = std::make_shared<std::vector<std::size_t>>();
  auto grads = std::make_shared<std::vector<double>>();
  double acc = 0.0;
  for (const auto& o : objects) {
    check_cell(box2d_map, o);
    std::array<J, 4> p;
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t i = flat_index(box2d_map, c, o.cell_v, o.cell_u);
      p[c] = J::variable(box2d_map.values()[i], c);
      idx->push_back(i);
    }
    const auto terms = reg2d_terms_t<J>(p, o);
    const double w = depth_aware_weight(o.depth, gamma) * inv_n;
    const J total = terms[0] + terms[1];
    acc += w * total.a;
    for (std::size_t c = 0; c < 4; ++c) grads->push_back(w * total.v[c]);
  }
  Tensor out = Tensor::scalar(acc);
  if (tape.needs_grad({&box2d_map})) {
    tape.record("disentangled_reg2d", {box2d_map}, out, [box2d_map, out, idx, grads]() mutable {
      const double g = out.grad()[0];
      auto d = box2d_map.grad();
      for (std::size_t k = 0; k < idx->size(); ++k) d[(*idx)[k]] += g * (*grads)[k];
    });
  }
  return out;
}

Tensor disentangled_reg3d(Tape& tape, const Tensor& dim_angle_map, const Tensor& offset_map, const Tensor& depth_map,
                          const std::vector<ObjectTarget>& objects, const CameraIntrinsics& K,
                          const DimensionTemplate& dims, const LossConfig& cfg) {
  if (dim_angle_map.rank() != 3 || dim_angle_map.dim(0) != 5 || offset_map.rank() != 3 || offset_map.dim(0) != 2 ||
      depth_map.rank() != 3 || depth_map.dim(0) != 1) {
    throw DimensionError("disentangled_reg3d: expected 5/2/1-channel maps");
  }
  if (objects.empty()) return Tensor::scalar(0.0);
  using J = Jet<8>;
  const double inv_n = 1.0 / static_cast<double>(objects.size());
  struct Grad {
    std::size_t map;  // 0 dim_angle, 1 offset, 2 depth
    std::size_t index;
    double value;
  };
  auto grads = std::make_shared<std::vector<Grad>>();
  double acc = 0.0;
  std::size_t clamped = 0;
  for (const auto& o : objects) {
    check_cell(dim_angle_map, o);
    Params3d::Of<J> p;
    std::array<std::pair<std::size_t, std::size_t>, 8> where;
    for (std::size_t c = 0; c < 5; ++c) {
      const std::size_t i = flat_index(dim_angle_map, c, o.cell_v, o.cell_u);
      p.da[c] = J::variable(dim_angle_map.values()[i], c);
      where[c] = {0, i};
    }
    for (std::size_t c = 0; c < 2; ++c) {
      const std::size_t i = flat_index(offset_map, c, o.cell_v, o.cell_u);
      p.off[c] = J::variable(offset_map.values()[i], 5 + c);
      where[5 + c] = {1, i};
    }
    const std::size_t di = flat_index(depth_map, 0, o.cell_v, o.cell_u);
    p.enc = J::variable(depth_map.values()[di], 7);
    where[7] = {2, di};
    if (decode_depth(p.enc.a) < cfg.min_decoded_depth) ++clamped;

    const auto terms = reg3d_terms_t<J>(p, o, K, dims, cfg);
    const J total = terms[0] + terms[1] + terms[2] + terms[3];
    acc += inv_n * total.a;
    for (std::size_t k = 0; k < 8; ++k) grads->push_back({where[k].first, where[k].second, inv_n * total.v[k]});
  }
  if (clamped) log_warning("disentangled_reg3d: decoded depth clamped for " + std::to_string(clamped) + " object(s)");
  Tensor out = Tensor::scalar(acc);
  if (tape.needs_grad({&dim_angle_map, &offset_map, &depth_map})) {
    tape.record("disentangled_reg3d", {dim_angle_map, offset_map, depth_map}, out,
                [dim_angle_map, offset_map, depth_map, out, grads]() mutable {
                  const double g = out.grad()[0];
                  const Tensor* maps[3] = {&dim_angle_map, &offset_map, &depth_map};
                  for (const auto& e : *grads) {
                    if (maps[e.map]->requires_grad()) maps[e.map]->grad()[e.index] += g * e.value;
                  }
                });
  }
  return out;
}

Tensor depth_hint_loss(Tape& tape, const Tensor& pred, const std::vector<double>& target, const std::vector<int>& mask) {
  if (pred.numel() != target.size() || target.size() != mask.size()) {
    throw DimensionError("depth_hint_loss: prediction, target and mask lengths differ");
  }
  std::size_t active = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!mask[i]) continue;
    ++active;
    acc += std::abs(target[i] - pred.values()[i]);
  }
  if (active == 0) return Tensor::scalar(0.0);
  const double inv = 1.0 / static_cast<double>(active);
  Tensor out = Tensor::scalar(acc * inv);
  if (tape.needs_grad({&pred})) {
    tape.record("depth_hint_loss", {pred}, out, [pred, out, target, mask, inv]() mutable {
      const double g = out.grad()[0];
      auto d = pred.grad();
      for (std::size_t i = 0; i < target.size(); ++i) {
        if (!mask[i]) continue;
        const double diff = pred.values()[i] - target[i];
        d[i] += g * inv * (diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0);
      }
    });
  }
  return out;
}

Tensor total_loss(Tape& tape, const LossParts& parts, const LossConfig& cfg, const LossMask& mask) {
  const std::pair<const char*, const Tensor*> named[] = {
      {"keypoint", &parts.keypoint}, {"reg2d", &parts.reg2d}, {"reg3d", &parts.reg3d}, {"depth_hint", &parts.depth_hint}};
  for (const auto& [name, t] : named) {
    if (!t->defined() || t->numel() != 1) throw ContractError(std::string("total_loss: missing part ") + name);
    if (!std::isfinite(t->item())) {
      throw DivergenceError(std::string("training diverged: loss term '") + name + "' is not finite");
    }
  }
  const std::vector<double> w = {mask.keypoint ? 1.0 : 0.0, mask.reg2d ? cfg.lambda1 : 0.0,
                                 mask.reg3d ? cfg.lambda2 : 0.0, mask.depth_hint ? cfg.lambda3 : 0.0};
  return ops::weighted_sum(tape, {parts.keypoint, parts.reg2d, parts.reg3d, parts.depth_hint}, w);
}

LossParts compute_losses(Tape& tape, const NetworkOutput& out, const TrainingTargets& targets,
                         const CameraIntrinsics& K, const DimensionTemplate& dims, const LossConfig& cfg) {
  LossParts p;
  p.keypoint = keypoint_loss(tape, out.heatmap, targets.heatmap, targets.objects.size(), cfg);
  p.reg2d = disentangled_reg2d(tape, out.group(Group::box2d), targets.objects, cfg.gamma);
  p.reg3d = disentangled_reg3d(tape, out.group(Group::dim_angle), out.group(Group::offset3d),
                               out.group(Group::depth), targets.objects, K, dims, cfg);
  if (out.hint_vector) {
    p.depth_hint = depth_hint_loss(tape, *out.hint_vector, targets.hint, targets.hint_mask);
  } else {
    p.depth_hint = Tensor::scalar(0.0);
  }
  return p;
}

}  // namespace fadnet
