// Acceptance harness: one PASS/FAIL line per criterion, then a summary.
//
// Criteria whose quantitative target is known to be out of reach at desk
// scale are still evaluated and reported as FAIL; they are listed in
// kDocumentedShortfalls so the summary can separate them from regressions.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eval_oracle.hpp"
#include "fadnet/dataset.hpp"
#include "fadnet/decode.hpp"
#include "fadnet/errors.hpp"
#include "fadnet/gradcheck_sweep.hpp"
#include "fadnet/losses.hpp"
#include "fadnet/metrics.hpp"
#include "fadnet/ops.hpp"
#include "fadnet/trainer.hpp"

using namespace fadnet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  bool skip_training = false;
  std::size_t overfit_passes = 32;
  int overfit_width = 64;
  std::size_t ablation_passes = 4;
  std::string report;
};

const std::set<std::string> kDocumentedShortfalls = {"overfit"};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity(const Options&) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  bool ok = true;
  std::size_t n = 0;
  for (const auto& r : gradcheck_sweep({})) {
    ++n;
    ok = ok && r.report.evaluation_errors.empty() && r.report.max_rel_error < 1e-4;
    if (r.report.max_rel_error >= worst) {
      worst = r.report.max_rel_error;
      worst_name = r.name;
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 300;
  return {ok, std::to_string(n) + " cases, max rel error " + fmt(worst, 3) + " (" + worst_name + "), " +
                  fmt(secs, 3) + " s"};
}

Outcome codec_roundtrips(const Options&) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> U(0, 1);
  double worst = 0.0;
  const DimensionTemplate dims{{{1.53, 1.63, 3.88}, {1.76, 0.66, 0.84}, {1.74, 0.60, 1.76}}};
  for (int i = 0; i < 10000; ++i) {
    const double z = 0.5 + 80 * U(rng);
    worst = std::max(worst, std::abs(decode_depth(encode_depth(z)) - z));

    const int cat = static_cast<int>(U(rng) * 3);
    const std::array<double, 3> d = {dims.at(cat)[0] * (0.5 + U(rng)), dims.at(cat)[1] * (0.5 + U(rng)),
                                     dims.at(cat)[2] * (0.5 + U(rng))};
    const auto dd = decode_dimensions(dims, cat, std::log(d[0] / dims.at(cat)[0]), std::log(d[1] / dims.at(cat)[1]),
                                      std::log(d[2] / dims.at(cat)[2]));
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(dd[k] - d[k]));

    const CameraIntrinsics K{300 + 500 * U(rng), 300 + 500 * U(rng), 200 + 500 * U(rng), 100 + 100 * U(rng)};
    const double u = 1280 * U(rng), v = 384 * U(rng);
    KeypointEstimate kp;
    kp.cell_u = static_cast<int>(u / 4);
    kp.cell_v = static_cast<int>(v / 4);
    const auto c = decode_center2d(kp, u - kp.u(), v - kp.v());
    worst = std::max({worst, std::abs(c[0] - u), std::abs(c[1] - v)});

    const double x = -20 + 40 * U(rng), y = -2 + 4 * U(rng);
    const auto p = K.project(x, y, z);
    KeypointEstimate kq;
    kq.cell_u = static_cast<int>(std::floor(p[0] / 4));
    kq.cell_v = static_cast<int>(std::floor(p[1] / 4));
    const auto loc = decode_location3d(kq, p[0] - kq.u(), p[1] - kq.v(), encode_depth(z), K);
    worst = std::max({worst, std::abs(loc[0] - x), std::abs(loc[1] - y), std::abs(loc[2] - z)});
  }

  // Full decode of exact target encodings.
  SyntheticConfig sc;
  sc.height = 96;
  sc.width = 320;
  const Dataset ds = synthetic_dataset(102, 20, 4, sc);
  double worst_decode = 0.0;
  std::size_t objects = 0;
  for (const auto& s : ds.samples) {
    const auto& t = s.targets;
    NetworkOutput out;
    out.heatmap = t.heatmap;
    for (std::size_t g = 0; g < 4; ++g) out.groups[g] = Tensor(Shape{kGroupChannels[g], 24, 80}, 0.0);
    std::vector<KeypointEstimate> kps;
    for (const auto& o : t.objects) {
      for (std::size_t ch = 0; ch < 4; ++ch) out.groups[0].at(ch, o.cell_v, o.cell_u) = o.box2d[ch];
      for (std::size_t ch = 0; ch < 5; ++ch) out.groups[1].at(ch, o.cell_v, o.cell_u) = o.dim_angle[ch];
      for (std::size_t ch = 0; ch < 2; ++ch) out.groups[2].at(ch, o.cell_v, o.cell_u) = o.offset3d[ch];
      out.groups[3].at(0, o.cell_v, o.cell_u) = o.encoded_depth;
      kps.push_back({static_cast<int>(o.cell_u), static_cast<int>(o.cell_v), o.category, 1.0});
    }
    const auto dets = decode_detections(out, kps, s.frame.intrinsics, ds.target_config.dims).detections;
    if (dets.size() != t.objects.size()) return {false, "decode dropped an exact encoding"};
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const auto& a = dets[k].box3d;
      const auto& g = s.frame.objects[t.objects[k].label_index].box3d();
      const auto& r = t.objects[k].remade2d;
      for (double e : {a.x - g.x, a.y - g.y, a.z - g.z, a.H - g.H, a.W - g.W, a.L - g.L,
                       std::remainder(a.theta - g.theta, 2 * std::numbers::pi), dets[k].box2d.u - r.u,
                       dets[k].box2d.v - r.v, dets[k].box2d.w - r.w, dets[k].box2d.h - r.h})
        worst_decode = std::max(worst_decode, std::abs(e));
      ++objects;
    }
  }
  const bool ok = worst < 1e-9 && worst_decode < 1e-6;
  return {ok, "max codec error " + fmt(worst, 3) + " over 10^4 samples; decode max error " + fmt(worst_decode, 3) +
                  " over " + std::to_string(objects) + " objects"};
}

Outcome disentanglement(const Options&) {
  SyntheticConfig sc;
  sc.height = 96;
  sc.width = 320;
  const Dataset ds = synthetic_dataset(103, 40, 4, sc);
  std::mt19937_64 rng(104);
  std::normal_distribution<double> noise(0, 0.5);
  std::size_t objects = 0, zero_hits = 0, cross_positive = 0, cross_checks = 0;
  for (const auto& s : ds.samples) {
    for (const auto& gt : s.targets.objects) {
      if (objects == 100) break;
      ++objects;
      for (int k = 0; k < 2; ++k) {
        std::array<double, 4> p;
        for (double& v : p) v = noise(rng) * 5;
        p[2] += gt.box2d[2];
        p[3] += gt.box2d[3];
        p[2 * k] = gt.box2d[2 * k];
        p[2 * k + 1] = gt.box2d[2 * k + 1];
        const auto t = reg2d_terms(p, gt);
        zero_hits += t[k] == 0.0;
        cross_positive += t[1 - k] > 0.0;
        ++cross_checks;
      }
      for (int k = 0; k < 4; ++k) {
        Reg3dPrediction p;
        for (std::size_t i = 0; i < 5; ++i) p.dim_angle[i] = gt.dim_angle[i] + noise(rng);
        for (std::size_t i = 0; i < 2; ++i) p.offset3d[i] = gt.offset3d[i] + 4 * noise(rng);
        p.encoded_depth = gt.encoded_depth + noise(rng);
        if (k == 0) {
          p.dim_angle[3] = gt.dim_angle[3];
          p.dim_angle[4] = gt.dim_angle[4];
        } else if (k == 1) {
          for (std::size_t i = 0; i < 3; ++i) p.dim_angle[i] = gt.dim_angle[i];
        } else if (k == 2) {
          p.offset3d = gt.offset3d;
        } else {
          p.encoded_depth = gt.encoded_depth;
        }
        const auto t = reg3d_terms(p, gt, s.frame.intrinsics, ds.target_config.dims);
        zero_hits += t[k] == 0.0;
        for (int o = 0; o < 4; ++o) {
          if (o == k) continue;
          cross_positive += t[o] > 0.0;
          ++cross_checks;
        }
      }
    }
  }
  const bool ok = objects == 100 && zero_hits == 600 && cross_positive == cross_checks;
  return {ok, std::to_string(zero_hits) + "/600 subset terms exactly zero on " + std::to_string(objects) +
                  " objects; other terms positive in " + std::to_string(cross_positive) + "/" +
                  std::to_string(cross_checks)};
}

Outcome depth_hint_oracle(const Options&) {
  SyntheticConfig sc;
  sc.height = 384;
  sc.width = 1280;
  auto scenes = generate_synthetic(105, 100, 6, sc);
  TargetConfig cfg;
  cfg.dims = DimensionTemplate{sc.base_dims};
  std::size_t exact = 0, frames = 0, perturb_ok = 0, active = 0;
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> U(0, 60);
  for (const auto& sc_frame : scenes) {
    const KittiFrame& f = sc_frame.frame;
    bool same = true;
    for (auto mode : {HintBinning::box2d_center, HintBinning::projected_center}) {
      cfg.binning = mode;
      const auto t = build_targets(f, cfg);
      // Brute force: every bin scans every label.
      std::vector<double> hint(12, 0.0);
      std::vector<int> mask(12, 0);
      for (int b = 0; b < 12; ++b) {
        double sum = 0;
        int n = 0;
        for (const auto& o : f.objects) {
          const Box3D box = o.box3d();
          if (category_index(cfg.categories, o.type) < 0 || box.z <= 0) continue;
          const auto p = f.intrinsics.project(box.x, box.y, box.z);
          if (p[0] < 0 || p[1] < 0 || p[0] >= 1280 || p[1] >= 384) continue;
          double v;
          try {
            v = mode == HintBinning::box2d_center ? remake_label_2d(box, f.intrinsics).v : p[1];
          } catch (const GeometryError&) {
            continue;
          }
          const int bin = std::clamp(static_cast<int>(std::floor(v / 32)), 0, 11);
          if (bin == b) {
            sum += box.z;
            ++n;
          }
        }
        if (n > 0) {
          hint[static_cast<std::size_t>(b)] = sum / n;
          mask[static_cast<std::size_t>(b)] = 1;
        }
      }
      same = same && hint == t.hint && mask == t.hint_mask;

      if (mode == HintBinning::box2d_center) {
        Tensor pred(Shape{12}, 0.0, true);
        for (double& v : pred.values()) v = U(rng);
        Tape tape;
        const Tensor l0 = depth_hint_loss(tape, pred, t.hint, t.hint_mask);
        backward(l0, tape);
        bool masked_ok = true;
        for (std::size_t b = 0; b < 12; ++b) {
          if (t.hint_mask[b]) continue;
          masked_ok = masked_ok && pred.grad()[b] == 0.0;
          pred.values()[b] += 1e3;
        }
        Tape tape2;
        tape2.set_recording(false);
        masked_ok = masked_ok && depth_hint_loss(tape2, pred, t.hint, t.hint_mask).item() == l0.item();
        perturb_ok += masked_ok;
        for (int m : t.hint_mask) active += m;
      }
    }
    exact += same;
    ++frames;
  }
  const bool ok = exact == 100 && perturb_ok == 100 && active > 0;
  return {ok, std::to_string(exact) + "/100 frames re-binned exactly (both binning modes); masked bins inert in " +
                  std::to_string(perturb_ok) + "/100; " + std::to_string(active) + " active bins"};
}

bool inside_footprint(const Box3D& b, double c, double s, double x, double z) {
  const double dx = x - b.x, dz = z - b.z;
  return std::abs(c * dx - s * dz) <= b.L / 2 && std::abs(s * dx + c * dz) <= b.W / 2;
}

Outcome rotated_iou(const Options&) {
  std::mt19937_64 rng(107);
  std::uniform_real_distribution<double> U(0, 1);
  double worst = 0.0;
  int overlapping = 0;
  for (int pair = 0; pair < 200; ++pair) {
    const Box3D a{4 * U(rng) - 2, 0, 20 + 4 * U(rng), 1.5, 0.5 + 2 * U(rng), 1 + 4 * U(rng),
                  2 * std::numbers::pi * U(rng) - std::numbers::pi};
    const Box3D b{a.x + 3 * U(rng) - 1.5, 0, a.z + 3 * U(rng) - 1.5, 1.5, 0.5 + 2 * U(rng), 1 + 4 * U(rng),
                  2 * std::numbers::pi * U(rng) - std::numbers::pi};
    const double ca = std::cos(a.theta), sa = std::sin(a.theta), cb = std::cos(b.theta), sb = std::sin(b.theta);
    const double x0 = std::min(a.x, b.x) - 3.5, x1 = std::max(a.x, b.x) + 3.5;
    const double z0 = std::min(a.z, b.z) - 3.5, z1 = std::max(a.z, b.z) + 3.5;
    long in_a = 0, in_b = 0, both = 0;
    for (int i = 0; i < 1000000; ++i) {
      const double x = x0 + (x1 - x0) * U(rng), z = z0 + (z1 - z0) * U(rng);
      const bool pa = inside_footprint(a, ca, sa, x, z), pb = inside_footprint(b, cb, sb, x, z);
      in_a += pa;
      in_b += pb;
      both += pa && pb;
    }
    const double mc = static_cast<double>(both) / static_cast<double>(in_a + in_b - both);
    overlapping += both > 0;
    worst = std::max(worst, std::abs(iou_bev(a, b) - mc));
  }
  const Box3D sq{0, 0, 10, 1, 1, 1, 0};
  Box3D rot = sq;
  rot.theta = std::numbers::pi / 4;
  const double e45 = std::abs(iou_bev(sq, rot) - std::sqrt(2.0) / 2);
  const bool ok = worst < 1e-2 && e45 < 1e-6;
  return {ok, "max |polygon - Monte Carlo| " + fmt(worst, 3) + " over 200 pairs (" + std::to_string(overlapping) +
                  " overlapping); 45-degree case error " + fmt(e45, 3)};
}

Outcome ap_oracle(const Options&) {
  std::mt19937_64 rng(108);
  std::size_t cases = 0, exact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto images = fadnet::testing::random_eval_case(rng, 20);
    for (auto metric : {MetricKind::box2d, MetricKind::bev, MetricKind::box3d}) {
      for (auto interp : {Interpolation::r11, Interpolation::r40}) {
        EvalConfig cfg;
        cfg.metric = metric;
        cfg.interpolation = interp;
        cfg.iou_threshold = metric == MetricKind::box2d ? 0.7 : 0.5;
        ++cases;
        bool same = average_precision(images, cfg) == fadnet::testing::brute_force_ap(images, cfg, false);
        if (metric == MetricKind::box2d) same = same && aos(images, cfg) == fadnet::testing::brute_force_ap(images, cfg, true);
        exact += same;
      }
    }
  }
  const Box2D b1 = Box2D::from_ltrb(100, 100, 200, 200), b2 = Box2D::from_ltrb(400, 100, 500, 200);
  EvalImage im;
  for (const Box2D& b : {b1, b2}) {
    GroundTruth g;
    g.category = 0;
    g.box2d = b;
    im.ground_truth.push_back(g);
  }
  Detection d;
  d.score = 0.9;
  d.box2d = b1;
  im.detections = {d};
  EvalConfig cfg;
  cfg.metric = MetricKind::box2d;
  cfg.interpolation = Interpolation::r11;
  cfg.difficulty = Difficulty::easy;
  const double ap = average_precision({im}, cfg);
  const bool ok = exact == cases && ap == 6.0 / 11.0;
  return {ok, std::to_string(exact) + "/" + std::to_string(cases) + " generated cases exact; two-gt/one-TP AP|R11 = " +
                  fmt(ap, 10)};
}

// ---------------------------------------------------------------------------
// Training-based criteria.

struct ObjectCheck {
  double iou = 0.0;
  double center_px = 1e9;
  double depth_m = 1e9;
};

// For every ground-truth object, the same-category detection of highest 3D IoU.
std::vector<ObjectCheck> check_objects(const FadNet& net, const Dataset& ds, std::vector<Detection>* all_dets) {
  std::vector<ObjectCheck> out;
  for (const auto& s : ds.samples) {
    Tape tape;
    tape.set_recording(false);
    const NetworkOutput o = net.forward(tape, s.image);
    const auto dets =
        decode_detections(o, extract_keypoints(o.heatmap), s.frame.intrinsics, ds.target_config.dims).detections;
    if (all_dets) all_dets->insert(all_dets->end(), dets.begin(), dets.end());
    const auto& K = s.frame.intrinsics;
    for (const auto& g : s.targets.objects) {
      ObjectCheck c;
      for (const auto& d : dets) {
        if (d.category != g.category) continue;
        const double iou = iou_3d(d.box3d, g.box3d);
        if (iou <= c.iou && c.center_px < 1e9) continue;
        const auto pd = K.project(d.box3d.x, d.box3d.y, d.box3d.z);
        const auto pg = K.project(g.box3d.x, g.box3d.y, g.box3d.z);
        c = {iou, std::hypot(pd[0] - pg[0], pd[1] - pg[1]), std::abs(d.box3d.z - g.box3d.z)};
      }
      out.push_back(c);
    }
  }
  return out;
}

double mean_total_loss(const Trainer& tr, const Dataset& ds, const LossConfig& lc) {
  double tot = 0.0;
  for (const auto& s : ds.samples) {
    const LossParts p = tr.evaluate(s);
    tot += p.keypoint.item() + lc.lambda1 * p.reg2d.item() + lc.lambda2 * p.reg3d.item() +
           lc.lambda3 * p.depth_hint.item();
  }
  return tot / static_cast<double>(ds.size());
}

// Shared by the overfit and consistency criteria.
struct OverfitRun {
  bool done = false;
  double seconds = 0.0;
  double final_total = 0.0;
  std::vector<EpochLog> history;
  std::vector<ObjectCheck> objects;
  std::vector<Detection> detections;
  std::vector<CameraIntrinsics> intrinsics;
};

OverfitRun& overfit_run(const Options& opt) {
  static OverfitRun run;
  if (run.done) return run;
  SyntheticConfig sc;
  sc.height = 64;
  sc.width = opt.overfit_width;
  const Dataset ds = synthetic_dataset(7, 8, 3, sc);
  ModelConfig mc;
  mc.height = sc.height;
  mc.width = sc.width;
  mc.seed = 1;
  FadNet net(mc);
  TrainConfig tc;
  tc.schedule = StageSchedule::desk(mc);
  tc.passes_per_epoch = opt.overfit_passes;
  tc.seed = 3;
  const auto t0 = Clock::now();
  Trainer tr(net, ds, tc);
  run.history = tr.run([](const EpochLog& r) { std::cout << "  overfit " << format_log_row(r) << std::endl; });
  run.seconds = seconds_since(t0);
  run.final_total = mean_total_loss(tr, ds, tc.loss);
  run.objects = check_objects(net, ds, &run.detections);
  run.intrinsics.push_back(ds.samples.front().frame.intrinsics);
  run.done = true;
  return run;
}

Outcome overfit(const Options& opt) {
  if (opt.skip_training) return {false, "skipped (--skip-training)"};
  const OverfitRun& r = overfit_run(opt);
  std::size_t ok = 0;
  for (const auto& c : r.objects) ok += c.iou > 0.5 && c.center_px < 2.0 && c.depth_m < 0.5;
  const double frac = static_cast<double>(ok) / static_cast<double>(r.objects.size());
  const bool loss_ok = r.final_total < 0.05;
  const bool det_ok = frac >= 0.9;
  const bool time_ok = r.seconds < 900;
  return {loss_ok && det_ok && time_ok,
          "final total loss " + fmt(r.final_total) + (loss_ok ? " (< 0.05)" : " (target < 0.05 NOT met)") + "; " +
              std::to_string(ok) + "/" + std::to_string(r.objects.size()) + " objects within center<2px, depth<0.5m, IoU3D>0.5 (" +
              fmt(100 * frac, 3) + "%, need 90%); " + fmt(r.seconds, 4) + " s"};
}

Outcome consistency(const Options& opt) {
  // Self-consistent detector: 2D boxes are the projections of the 3D boxes.
  SyntheticConfig sc;
  sc.height = 384;
  sc.width = 1280;
  auto scenes = generate_synthetic(109, 30, 5, sc);
  std::vector<Detection> self;
  for (const auto& s : scenes)
    for (const auto& o : s.frame.objects) {
      Detection d;
      d.box3d = o.box3d();
      d.box2d = remake_label_2d(d.box3d, s.frame.intrinsics);
      self.push_back(d);
    }
  // Every synthetic frame shares one set of intrinsics.
  const auto st = consistency_stat(self, scenes.front().frame.intrinsics);
  bool self_ok = true;
  std::string counts;
  for (const auto& b : st) {
    self_ok = self_ok && b.count > 0 && b.mean_iou && std::abs(*b.mean_iou - 1.0) < 1e-12;
    counts += std::to_string(b.count) + " ";
  }
  if (opt.skip_training) return {false, "self-consistent buckets " + std::string(self_ok ? "all 1.0" : "WRONG") +
                                            "; trained part skipped (--skip-training)"};
  const OverfitRun& r = overfit_run(opt);
  const auto tr = consistency_stat(r.detections, r.intrinsics.front());
  bool trained_ok = true;
  std::size_t nonempty = 0;
  std::string vals;
  for (const auto& b : tr) {
    if (b.count == 0) {
      vals += "empty ";
      continue;
    }
    ++nonempty;
    trained_ok = trained_ok && *b.mean_iou >= 0.0 && *b.mean_iou <= 1.0;
    vals += fmt(*b.mean_iou, 3) + " ";
  }
  trained_ok = trained_ok && nonempty == tr.size();
  return {self_ok && trained_ok, "self-consistent detector counts [" + counts + "] all 1.0: " +
                                     (self_ok ? "yes" : "no") + "; trained toy model buckets [" + vals + "]"};
}

Outcome ablation(const Options& opt) {
  // Inventory structure.
  ModelConfig base_cfg;
  base_cfg.height = 64;
  base_cfg.width = 64;
  std::map<std::string, std::map<std::string, Shape>> inv;
  for (auto v : {Variant::full, Variant::baseline, Variant::fa, Variant::dh, Variant::reversed}) {
    for (const auto& [n, s] : parameter_inventory(apply_variant(base_cfg, v))) inv[variant_name(v)][n] = s;
  }
  const auto diff = [&](const std::string& a, const std::string& b) {
    std::set<std::string> out;
    for (const auto& [n, s] : inv[a])
      if (!inv[b].count(n) || inv[b][n] != s) out.insert(n);
    return out;
  };
  const auto only = [](const std::set<std::string>& names, std::initializer_list<const char*> prefixes) {
    return std::all_of(names.begin(), names.end(), [&](const std::string& n) {
      return std::any_of(prefixes.begin(), prefixes.end(), [&](const char* p) { return n.rfind(p, 0) == 0; });
    });
  };
  const auto fa_extra = diff("fa", "baseline"), dh_extra = diff("dh", "baseline"), full_extra = diff("full", "baseline");
  const bool inv_ok = fa_extra.size() == 6 && only(fa_extra, {"gru."}) && diff("baseline", "fa").empty() &&
                      only(dh_extra, {"depth_hint.", "heads.depth.conv3x3.weight"}) && dh_extra.size() == 5 &&
                      full_extra.size() == 11 && only(full_extra, {"gru.", "depth_hint.", "heads.depth.conv3x3.weight"}) &&
                      inv["full"] == inv["reversed"];
  std::string detail = std::string("inventories ") + (inv_ok ? "differ exactly by gru/depth-hint blocks" : "MISMATCH");
  if (opt.skip_training) return {false, detail + "; training skipped (--skip-training)"};

  SyntheticConfig sc;
  sc.height = 64;
  sc.width = 64;
  const Dataset train = synthetic_dataset(110, 8, 2, sc);
  TargetConfig tcfg = train.target_config;
  auto held_scenes = generate_synthetic(111, 16, 2, sc);
  std::vector<KittiFrame> hf;
  std::vector<Tensor> hi;
  for (auto& s : held_scenes) {
    hf.push_back(s.frame);
    hi.push_back(s.image);
  }
  const Dataset held = make_dataset(hf, hi, tcfg, train.normalizer);

  bool converged = true;
  std::map<std::string, double> depth_err;
  for (auto v : {Variant::full, Variant::baseline, Variant::fa, Variant::dh, Variant::reversed}) {
    ModelConfig mc = apply_variant(base_cfg, v);
    mc.seed = 4;
    FadNet net(mc);
    TrainConfig tc;
    tc.schedule = StageSchedule::desk(mc);
    tc.passes_per_epoch = opt.ablation_passes;
    tc.seed = 5;
    Trainer tr(net, train, tc);
    const auto t0 = Clock::now();
    const auto hist = tr.run();
    const double first = hist.front().total, last = hist.back().total;
    const bool conv = std::isfinite(last) && last < 0.5 * first;
    converged = converged && conv;
    double err = 0.0;
    std::size_t n = 0;
    for (const auto& s : held.samples) {
      Tape tape;
      tape.set_recording(false);
      const auto out = net.forward(tape, s.image);
      for (const auto& o : s.targets.objects) {
        err += std::abs(decode_depth(out.group(Group::depth).at(0, o.cell_v, o.cell_u)) - o.depth);
        ++n;
      }
    }
    depth_err[variant_name(v)] = err / static_cast<double>(n);
    std::cout << "  ablation " << variant_name(v) << ": total " << fmt(first) << " -> " << fmt(last)
              << ", held-out mean depth error " << fmt(depth_err[variant_name(v)]) << " m, "
              << fmt(seconds_since(t0), 3) << " s" << std::endl;
  }
  const bool dir_ok = depth_err["full"] <= depth_err["baseline"];
  detail += std::string("; all variants converged: ") + (converged ? "yes" : "no") + "; held-out depth error full " +
            fmt(depth_err["full"]) + " m vs baseline " + fmt(depth_err["baseline"]) + " m";
  return {inv_ok && converged && dir_ok, detail};
}

Outcome depth_row(const Options&) {
  // Ground-plane scenes: objects rest on a flat road, so depth falls with row.
  const CameraIntrinsics K{721.5377, 721.5377, 609.5593, 172.854};
  std::mt19937_64 rng(112);
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<ObjectLabel> labels;
  for (int i = 0; i < 400; ++i) {
    const double z = 4 + 56 * U(rng);
    ObjectLabel o;
    o.type = "Car";
    o.set_box3d({-6 + 12 * U(rng), 1.65 - 0.75, z, 1.5, 1.6, 3.9, 6 * U(rng) - 3});
    o.set_box2d(remake_label_2d(o.box3d(), K));
    labels.push_back(o);
  }
  // Sparse tail buckets hold a handful of near objects whose mean is noisy.
  std::vector<RowBucketStat> rows;
  for (const auto& r : depth_row_stat(labels, 32))
    if (r.count >= 10) rows.push_back(r);
  bool mono = rows.size() >= 3;
  std::string means;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) mono = mono && rows[i].mean_depth < rows[i - 1].mean_depth;
    means += fmt(rows[i].mean_depth, 3) + " ";
  }
  std::string detail = std::to_string(rows.size()) + " row buckets with >= 10 objects, mean depths [" + means +
                       "] m, strictly decreasing: " + (mono ? "yes" : "no");

  std::optional<std::filesystem::path> root;
  try {
    root = resolve_data_dir(std::nullopt);
  } catch (const ParameterError&) {
  }
  bool real_ok = true;
  if (root && std::filesystem::is_directory(*root / "label_2")) {
    std::vector<ObjectLabel> real;
    for (const auto& f : load_kitti_dir(*root))
      for (const auto& o : f.objects)
        if (category_index({"Car", "Pedestrian", "Cyclist"}, o.type) >= 0) real.push_back(o);
    const auto rr = depth_row_stat(real, 32);
    double near96 = 0, near300 = 1e9;
    for (const auto& r : rr) {
      if (r.row_start == 96) near96 = r.mean_depth;
      if (r.row_start == 288) near300 = r.mean_depth;
    }
    real_ok = near96 > 30 && near300 < 10;
    detail += "; KITTI labels: row 96 " + fmt(near96, 3) + " m, row 288 " + fmt(near300, 3) + " m";
  } else {
    detail += "; real-KITTI comparison not run (no dataset directory)";
  }
  return {mono && real_ok, detail};
}

Outcome hyperparameters(const Options&) {
  const LossConfig c;
  const bool defaults = c.alpha == 2 && c.beta == 4 && c.gamma == 0.4 && c.lambda1 == 5 && c.lambda2 == 2 &&
                        c.lambda3 == 1;
  Tape tape;
  tape.set_recording(false);
  LossParts p{Tensor::scalar(1), Tensor::scalar(1), Tensor::scalar(1), Tensor::scalar(1)};
  const double total = total_loss(tape, p).item();
  return {defaults && total == 9.0, "alpha " + fmt(c.alpha) + ", beta " + fmt(c.beta) + ", gamma " + fmt(c.gamma) +
                                        ", lambda (" + fmt(c.lambda1) + ", " + fmt(c.lambda2) + ", " + fmt(c.lambda3) +
                                        "); total of unit parts " + fmt(total)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Options opt;
  app.add_flag("--skip-training", opt.skip_training, "Skip the criteria that train networks");
  app.add_option("--overfit-passes", opt.overfit_passes, "Passes over the 8 frames per logged epoch");
  app.add_option("--overfit-width", opt.overfit_width, "Input width of the overfit run (height is 64)");
  app.add_option("--ablation-passes", opt.ablation_passes, "Passes per epoch for each ablation variant");
  app.add_option("--report", opt.report, "Also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(const Options&)>>> criteria = {
      {"gradient-integrity", gradient_integrity},
      {"codec-roundtrips", codec_roundtrips},
      {"disentanglement", disentanglement},
      {"depth-hint-targets", depth_hint_oracle},
      {"rotated-iou", rotated_iou},
      {"ap-aos-oracle", ap_oracle},
      {"overfit", overfit},
      {"ablation", ablation},
      {"consistency-stat", consistency},
      {"depth-row-stat", depth_row},
      {"hyperparameters", hyperparameters},
  };
  std::vector<std::string> lines, failed;
  std::size_t unexpected = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn(opt);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::string line = std::string(o.pass ? "PASS " : "FAIL ") + name + ": " + o.detail + " [" +
                       fmt(seconds_since(t0), 3) + " s]";
    if (!o.pass) {
      failed.push_back(name);
      if (kDocumentedShortfalls.count(name)) {
        line += " (documented shortfall)";
      } else {
        ++unexpected;
      }
    }
    std::cout << line << std::endl;
    lines.push_back(line);
  }
  std::string summary = "acceptance summary: " + std::to_string(criteria.size() - failed.size()) + "/" +
                        std::to_string(criteria.size()) + " passed";
  if (!failed.empty()) {
    summary += "; failed:";
    for (const auto& f : failed) summary += " " + f;
  }
  summary += "; unexpected failures: " + std::to_string(unexpected);
  std::cout << summary << std::endl;
  lines.push_back(summary);
  if (!opt.report.empty()) {
    std::ofstream f(opt.report);
    for (const auto& l : lines) f << l << '\n';
  }
  return failed.empty() ? 0 : 1;
}
