#include "fadnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <iomanip>
#include <sstream>

#include "fadnet/errors.hpp"

namespace fadnet {
namespace {

using Pt = std::array<double, 2>;

double signed_area(const std::vector<Pt>& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Pt& q = p[i];
    const Pt& r = p[(i + 1) % p.size()];
    a += q[0] * r[1] - r[0] * q[1];
  }
  return 0.5 * a;
}

void make_ccw(std::vector<Pt>& p) {
  if (signed_area(p) < 0) std::reverse(p.begin(), p.end());
}

// > 0 when r is left of the directed edge a->b.
double side(const Pt& a, const Pt& b, const Pt& r) {
  return (b[0] - a[0]) * (r[1] - a[1]) - (b[1] - a[1]) * (r[0] - a[0]);
}

Pt intersect(const Pt& p, const Pt& q, const Pt& a, const Pt& b) {
  const double sp = side(a, b, p), sq = side(a, b, q);
  const double t = sp / (sp - sq);
  return {p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
}

constexpr double kMinHeight[3] = {40, 25, 25};
constexpr int kMaxOcclusion[3] = {0, 1, 2};
constexpr double kMaxTruncation[3] = {0.15, 0.30, 0.50};

int neighbor_category(const std::vector<std::string>& categories, const std::string& type) {
  if (type == "Van") return category_index(categories, "Car");
  if (type == "Person_sitting") return category_index(categories, "Pedestrian");
  return -1;
}

double box_area(const Box2D& b) { return std::max(0.0, b.w) * std::max(0.0, b.h); }

double intersection_2d(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  return (iw > 0 && ih > 0) ? iw * ih : 0.0;
}

double bev_intersection(const Box3D& a, const Box3D& b) {
  return convex_intersection_area(bev_footprint(a), bev_footprint(b));
}

double overlap(const Detection& d, const GroundTruth& g, MetricKind kind) {
  switch (kind) {
    case MetricKind::box2d:
    case MetricKind::aos:
      return iou_2d(d.box2d, g.box2d);
    case MetricKind::bev:
      return iou_bev(d.box3d, g.box3d);
    case MetricKind::box3d:
      return iou_3d(d.box3d, g.box3d);
  }
  return 0.0;
}

struct Outcome {
  double score;
  std::size_t image;
  std::size_t index;
  bool tp;
  double similarity;
};

}  // namespace

double iou_2d(const Box2D& a, const Box2D& b) {
  const double inter = intersection_2d(a, b);
  const double uni = box_area(a) + box_area(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<std::array<double, 2>> bev_footprint(const Box3D& box) {
  const auto c = corners3d(box);
  return {{c[0][0], c[0][2]}, {c[1][0], c[1][2]}, {c[2][0], c[2][2]}, {c[3][0], c[3][2]}};
}

double convex_intersection_area(std::vector<Pt> subject, std::vector<Pt> clip) {
  if (subject.size() < 3 || clip.size() < 3) return 0.0;
  if (std::abs(signed_area(subject)) <= 0 || std::abs(signed_area(clip)) <= 0) return 0.0;
  make_ccw(subject);
  make_ccw(clip);
  std::vector<Pt> poly = subject;
  for (std::size_t e = 0; e < clip.size() && !poly.empty(); ++e) {
    const Pt& a = clip[e];
    const Pt& b = clip[(e + 1) % clip.size()];
    std::vector<Pt> next;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Pt& p = poly[i];
      const Pt& q = poly[(i + 1) % poly.size()];
      const bool p_in = side(a, b, p) >= 0;
      const bool q_in = side(a, b, q) >= 0;
      if (p_in) next.push_back(p);
      if (p_in != q_in) next.push_back(intersect(p, q, a, b));
    }
    poly = std::move(next);
  }
  if (poly.size() < 3) return 0.0;
  return std::abs(signed_area(poly));
}

double iou_bev(const Box3D& a, const Box3D& b) {
  const double area_a = a.W * a.L, area_b = b.W * b.L;
  if (!(area_a > 0) || !(area_b > 0)) return 0.0;
  const double inter = bev_intersection(a, b);
  const double uni = area_a + area_b - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double vol_a = a.W * a.L * a.H, vol_b = b.W * b.L * b.H;
  if (!(vol_a > 0) || !(vol_b > 0)) return 0.0;
  const double y_lo = std::max(a.y - a.H / 2, b.y - b.H / 2);
  const double y_hi = std::min(a.y + a.H / 2, b.y + b.H / 2);
  if (y_hi <= y_lo) return 0.0;
  const double inter = bev_intersection(a, b) * (y_hi - y_lo);
  const double uni = vol_a + vol_b - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::easy:
      return "easy";
    case Difficulty::moderate:
      return "moderate";
    case Difficulty::hard:
      return "hard";
    case Difficulty::ignored:
      return "ignored";
  }
  return "?";
}

Difficulty difficulty_filter(const ObjectLabel& label, const Box2D& remade2d) {
  for (int level = 0; level < 3; ++level) {
    if (remade2d.h >= kMinHeight[level] && label.occluded <= kMaxOcclusion[level] &&
        label.truncated <= kMaxTruncation[level]) {
      return static_cast<Difficulty>(level);
    }
  }
  return Difficulty::ignored;
}

void EvalConfig::validate() const {
  if (!(iou_threshold > 0 && iou_threshold < 1)) throw ParameterError("eval: IoU threshold must lie in (0,1)");
  if (difficulty == Difficulty::ignored) throw ParameterError("eval: difficulty must be easy, moderate or hard");
  if (category < 0) throw ParameterError("eval: category index must be non-negative");
}

std::vector<GroundTruth> ground_truth_from_labels(const std::vector<ObjectLabel>& labels,
                                                  const std::vector<std::string>& categories,
                                                  const std::optional<CameraIntrinsics>& K) {
  std::vector<GroundTruth> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    GroundTruth g;
    g.dont_care = l.dont_care();
    g.category = category_index(categories, l.type);
    g.neighbor_of = neighbor_category(categories, l.type);
    g.box2d = l.box2d();
    g.box3d = l.box3d();
    g.alpha = l.alpha;
    if (K && !g.dont_care) {
      try {
        g.box2d = remake_label_2d(g.box3d, *K);
      } catch (const GeometryError&) {
        // Boxes straddling the camera plane keep their stored 2D box.
      }
    }
    g.level = g.dont_care ? Difficulty::ignored : difficulty_filter(l, g.box2d);
    out.push_back(g);
  }
  return out;
}

std::vector<PRPoint> precision_recall(const std::vector<EvalImage>& images, const EvalConfig& cfg) {
  cfg.validate();
  const auto D = static_cast<int>(cfg.difficulty);
  const MetricKind kind = cfg.metric;
  std::size_t n_valid = 0;
  std::vector<Outcome> outcomes;

  for (std::size_t im = 0; im < images.size(); ++im) {
    const auto& img = images[im];
    const auto& gts = img.ground_truth;
    std::vector<char> valid(gts.size(), 0), ignored(gts.size(), 0), taken(gts.size(), 0);
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const auto& g = gts[j];
      if (g.dont_care) continue;
      if (g.category == cfg.category) {
        if (static_cast<int>(g.level) <= D) {
          valid[j] = 1;
          ++n_valid;
        } else {
          ignored[j] = 1;
        }
      } else if (g.neighbor_of == cfg.category) {
        ignored[j] = 1;
      }
    }

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < img.detections.size(); ++i) {
      if (img.detections[i].category == cfg.category) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return img.detections[a].score > img.detections[b].score;
    });

    for (std::size_t i : order) {
      const auto& d = img.detections[i];
      if (d.box2d.h < kMinHeight[D]) continue;
      double best = -1.0;
      std::size_t best_j = gts.size();
      bool hits_ignored = false;
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (!valid[j] && !ignored[j]) continue;
        const double o = overlap(d, gts[j], kind);
        if (o < cfg.iou_threshold) continue;
        if (valid[j]) {
          if (!taken[j] && o > best) {
            best = o;
            best_j = j;
          }
        } else {
          hits_ignored = true;
        }
      }
      if (best_j < gts.size()) {
        taken[best_j] = 1;
        const double sim = (1.0 + std::cos(gts[best_j].alpha - d.alpha)) / 2.0;
        outcomes.push_back({d.score, im, i, true, sim});
        continue;
      }
      if (hits_ignored) continue;
      bool in_dont_care = false;
      const double area = box_area(d.box2d);
      for (const auto& g : gts) {
        if (g.dont_care && area > 0 && intersection_2d(d.box2d, g.box2d) / area > 0.5) {
          in_dont_care = true;
          break;
        }
      }
      if (in_dont_care) continue;
      outcomes.push_back({d.score, im, i, false, 0.0});
    }
  }

  std::vector<PRPoint> curve;
  if (n_valid == 0) return curve;
  std::sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });
  double tp = 0, fp = 0, sim = 0;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    if (outcomes[k].tp) {
      tp += 1;
      sim += outcomes[k].similarity;
    } else {
      fp += 1;
    }
    const bool last_of_score = k + 1 == outcomes.size() || outcomes[k + 1].score != outcomes[k].score;
    if (last_of_score) {
      curve.push_back({tp / static_cast<double>(n_valid), tp / (tp + fp), sim / (tp + fp)});
    }
  }
  return curve;
}

double interpolate_ap(const std::vector<PRPoint>& curve, Interpolation interp, bool similarity) {
  const int first = interp == Interpolation::r11 ? 0 : 1;
  const int last = interp == Interpolation::r11 ? 10 : 40;
  const double denom = interp == Interpolation::r11 ? 10.0 : 40.0;
  double acc = 0.0;
  for (int i = first; i <= last; ++i) {
    const double r = i / denom;
    double best = 0.0;
    for (const auto& p : curve) {
      if (p.recall >= r) best = std::max(best, similarity ? p.similarity_precision : p.precision);
    }
    acc += best;
  }
  return acc / static_cast<double>(last - first + 1);
}

double average_precision(const std::vector<EvalImage>& images, const EvalConfig& cfg) {
  if (cfg.metric == MetricKind::aos) return aos(images, cfg);
  return interpolate_ap(precision_recall(images, cfg), cfg.interpolation);
}

double aos(const std::vector<EvalImage>& images, const EvalConfig& cfg) {
  EvalConfig c = cfg;
  c.metric = MetricKind::aos;
  return interpolate_ap(precision_recall(images, c), cfg.interpolation, true);
}

std::vector<DepthBucketStat> consistency_stat(const std::vector<Detection>& dets, const CameraIntrinsics& K,
                                              const std::vector<double>& boundaries) {
  if (boundaries.size() < 2 || !std::is_sorted(boundaries.begin(), boundaries.end()) ||
      std::adjacent_find(boundaries.begin(), boundaries.end()) != boundaries.end()) {
    throw ParameterError("consistency_stat: boundaries must be strictly increasing with at least two entries");
  }
  std::vector<DepthBucketStat> out(boundaries.size() - 1);
  std::vector<double> sums(out.size(), 0.0);
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].lower = boundaries[b];
    out[b].upper = boundaries[b + 1];
  }
  for (const auto& d : dets) {
    const double z = d.box3d.z;
    const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), z);
    if (it == boundaries.begin() || it == boundaries.end()) continue;
    const auto b = static_cast<std::size_t>(it - boundaries.begin() - 1);
    Box2D remade;
    try {
      remade = remake_label_2d(d.box3d, K);
    } catch (const GeometryError&) {
      continue;
    }
    sums[b] += iou_2d(d.box2d, remade);
    ++out[b].count;
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    if (out[b].count > 0) out[b].mean_iou = sums[b] / static_cast<double>(out[b].count);
  }
  return out;
}

std::vector<RowBucketStat> depth_row_stat(const std::vector<ObjectLabel>& labels, int row_bucket_px) {
  if (row_bucket_px < 1) throw ParameterError("depth_row_stat: bucket size must be >= 1 px");
  std::map<long, std::pair<std::size_t, double>> acc;
  for (const auto& l : labels) {
    if (l.dont_care()) continue;
    const long b = static_cast<long>(std::floor(l.box2d().v / row_bucket_px));
    auto& slot = acc[b];
    ++slot.first;
    slot.second += l.z;
  }
  std::vector<RowBucketStat> out;
  for (const auto& [b, s] : acc) {
    out.push_back({static_cast<int>(b * row_bucket_px), s.first, s.second / static_cast<double>(s.first)});
  }
  return out;
}

std::string format_report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << "metric,difficulty,threshold,value\n";
  for (const auto& r : rows) {
    os << r.metric << ',' << difficulty_name(r.difficulty) << ',' << std::setprecision(2) << r.threshold << ','
       << std::setprecision(6) << r.value << '\n';
  }
  return os.str();
}

}  // namespace fadnet
