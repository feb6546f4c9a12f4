#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "eval_oracle.hpp"
#include "fadnet/errors.hpp"
#include "fadnet/metrics.hpp"

using namespace fadnet;

namespace {

GroundTruth gt(Box2D b2, Box3D b3, double alpha = 0.0) {
  GroundTruth g;
  g.category = 0;
  g.level = Difficulty::easy;
  g.box2d = b2;
  g.box3d = b3;
  g.alpha = alpha;
  return g;
}

Detection det(double score, Box2D b2, Box3D b3, double alpha = 0.0) {
  Detection d;
  d.score = score;
  d.box2d = b2;
  d.box3d = b3;
  d.alpha = alpha;
  return d;
}

bool inside_footprint(const Box3D& b, double x, double z) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  // Inverse of the yaw rotation applied to (L along x, W along z).
  const double dx = x - b.x, dz = z - b.z;
  const double lx = c * dx - s * dz, lz = s * dx + c * dz;
  return std::abs(lx) <= b.L / 2 && std::abs(lz) <= b.W / 2;
}

}  // namespace

TEST(IoU, AxisAligned) {
  EXPECT_NEAR(iou_2d(Box2D::from_ltrb(0, 0, 2, 2), Box2D::from_ltrb(1, 0, 3, 2)), 1.0 / 3, 1e-15);
  EXPECT_EQ(iou_2d(Box2D::from_ltrb(0, 0, 1, 1), Box2D::from_ltrb(2, 2, 3, 3)), 0.0);
  EXPECT_EQ(iou_2d({0, 0, 0, 0}, {0, 0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(iou_2d({5, 5, 4, 2}, {5, 5, 4, 2}), 1.0);
}

TEST(IoU, RotatedSquareBev) {
  const Box3D a{0, 0, 10, 1, 1, 1, 0};
  Box3D b = a;
  b.theta = std::numbers::pi / 4;
  EXPECT_NEAR(iou_bev(a, b), std::sqrt(2.0) / 2, 1e-12);
  EXPECT_NEAR(iou_bev(a, a), 1.0, 1e-12);
  b.theta = std::numbers::pi / 2;
  EXPECT_NEAR(iou_bev(a, b), 1.0, 1e-12);
}

TEST(IoU, BevMatchesMonteCarlo) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> U(0, 1);
  for (int trial = 0; trial < 15; ++trial) {
    const Box3D a{U(rng), 0, 20 + U(rng), 1.5, 1 + U(rng), 2 + 2 * U(rng), 6 * U(rng) - 3};
    const Box3D b{U(rng), 0, 20 + U(rng), 1.5, 1 + U(rng), 2 + 2 * U(rng), 6 * U(rng) - 3};
    const int N = 200000;
    int in_a = 0, in_b = 0, both = 0;
    for (int i = 0; i < N; ++i) {
      const double x = -3 + 7 * U(rng), z = 17 + 7 * U(rng);
      const bool pa = inside_footprint(a, x, z), pb = inside_footprint(b, x, z);
      in_a += pa;
      in_b += pb;
      both += pa && pb;
    }
    const double mc = static_cast<double>(both) / (in_a + in_b - both);
    EXPECT_NEAR(iou_bev(a, b), mc, 0.01) << "trial " << trial;
  }
}

TEST(IoU, VerticalOverlap3d) {
  const Box3D a{0, 0, 10, 2, 1, 1, 0};
  Box3D b = a;
  b.y = 1;
  EXPECT_NEAR(iou_3d(a, b), 1.0 / 3, 1e-12);
  b.y = 2;
  EXPECT_EQ(iou_3d(a, b), 0.0);
  EXPECT_NEAR(iou_3d(a, a), 1.0, 1e-12);
  Box3D flat = a;
  flat.H = 0;
  EXPECT_EQ(iou_3d(a, flat), 0.0);
}

TEST(IoU, ConvexIntersectionOrientationAgnostic) {
  std::vector<std::array<double, 2>> sq = {{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  std::vector<std::array<double, 2>> tri = {{1, 1}, {3, 1}, {1, 3}};
  const double ccw = convex_intersection_area(sq, tri);
  std::reverse(sq.begin(), sq.end());
  EXPECT_NEAR(convex_intersection_area(sq, tri), ccw, 1e-15);
  EXPECT_NEAR(ccw, 0.5 + 0.5 + 0.0, 1e-12);  // unit square minus a half-cell triangle
}

TEST(AveragePrecision, TwoGtOneCorrectDetection) {
  const Box2D b1 = Box2D::from_ltrb(100, 100, 200, 200), b2 = Box2D::from_ltrb(400, 100, 500, 200);
  EvalImage im;
  im.ground_truth = {gt(b1, {}), gt(b2, {})};
  im.detections = {det(0.9, b1, {})};
  EvalConfig cfg;
  cfg.metric = MetricKind::box2d;
  cfg.interpolation = Interpolation::r11;
  cfg.difficulty = Difficulty::easy;
  EXPECT_NEAR(average_precision({im}, cfg), 6.0 / 11, 1e-15);
  cfg.interpolation = Interpolation::r40;
  EXPECT_NEAR(average_precision({im}, cfg), 20.0 / 40, 1e-15);
}

TEST(AveragePrecision, EmptyCasesAreZero) {
  EvalConfig cfg;
  EXPECT_EQ(average_precision({}, cfg), 0.0);
  EvalImage im;
  im.ground_truth = {gt(Box2D::from_ltrb(0, 0, 50, 50), {0, 0, 10, 1.5, 1.6, 3.9, 0})};
  EXPECT_EQ(average_precision({im}, cfg), 0.0);
  cfg.iou_threshold = 1.0;
  EXPECT_THROW(average_precision({im}, cfg), ParameterError);
}

TEST(AveragePrecision, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(77);
  int nonzero = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const auto images = fadnet::testing::random_eval_case(rng, 20);
    for (auto metric : {MetricKind::box2d, MetricKind::bev, MetricKind::box3d}) {
      for (auto interp : {Interpolation::r11, Interpolation::r40}) {
        EvalConfig cfg;
        cfg.metric = metric;
        cfg.interpolation = interp;
        cfg.iou_threshold = metric == MetricKind::box2d ? 0.7 : 0.5;
        const double ap = average_precision(images, cfg);
        EXPECT_EQ(ap, fadnet::testing::brute_force_ap(images, cfg, false)) << "trial " << trial;
        nonzero += ap > 0;
        if (metric == MetricKind::box2d) {
          const double s = aos(images, cfg);
          EXPECT_EQ(s, fadnet::testing::brute_force_ap(images, cfg, true)) << "trial " << trial;
          EXPECT_LE(s, ap + 1e-15);
        }
      }
    }
  }
  EXPECT_GT(nonzero, 200);
}

TEST(Aos, PerfectAndAntipodal) {
  EvalImage im;
  for (int k = 0; k < 4; ++k) {
    const Box2D b = Box2D::from_ltrb(100 + 150 * k, 100, 200 + 150 * k, 180);
    im.ground_truth.push_back(gt(b, {}, 0.3 * k - 0.5));
    im.detections.push_back(det(0.9 - 0.1 * k, b, {}, 0.3 * k - 0.5));
  }
  im.detections.push_back(det(0.95, Box2D::from_ltrb(800, 300, 880, 360), {}));
  EvalConfig cfg;
  cfg.metric = MetricKind::box2d;
  const double ap = average_precision({im}, cfg);
  EXPECT_GT(ap, 0.0);
  EXPECT_DOUBLE_EQ(aos({im}, cfg), ap);
  for (auto& d : im.detections) d.alpha += std::numbers::pi;
  EXPECT_NEAR(aos({im}, cfg), 0.0, 1e-15);
}

TEST(Matching, IgnoredAndDontCareAreNeutral) {
  const Box2D b = Box2D::from_ltrb(100, 100, 200, 200);
  EvalImage im;
  im.ground_truth = {gt(b, {})};
  GroundTruth van = gt(Box2D::from_ltrb(400, 100, 500, 200), {});
  van.category = -1;
  van.neighbor_of = 0;
  GroundTruth dc = gt(Box2D::from_ltrb(600, 100, 800, 300), {});
  dc.category = -1;
  dc.dont_care = true;
  GroundTruth hard = gt(Box2D::from_ltrb(900, 100, 1000, 130), {});
  hard.level = Difficulty::hard;
  im.ground_truth.insert(im.ground_truth.end(), {van, dc, hard});
  im.detections = {det(0.9, b, {}), det(0.8, van.box2d, {}), det(0.7, Box2D::from_ltrb(650, 150, 700, 200), {}),
                   det(0.6, hard.box2d, {})};
  EvalConfig cfg;
  cfg.metric = MetricKind::box2d;
  cfg.difficulty = Difficulty::moderate;
  const auto curve = precision_recall({im}, cfg);
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_EQ(curve[0].recall, 1.0);
  EXPECT_EQ(curve[0].precision, 1.0);
}

TEST(Difficulty, Examples) {
  ObjectLabel l;
  l.occluded = 0;
  l.truncated = 0;
  EXPECT_EQ(difficulty_filter(l, {0, 0, 10, 50}), Difficulty::easy);
  l.occluded = 1;
  EXPECT_EQ(difficulty_filter(l, {0, 0, 10, 30}), Difficulty::moderate);
  l.occluded = 0;
  EXPECT_EQ(difficulty_filter(l, {0, 0, 10, 20}), Difficulty::ignored);
  l.occluded = 2;
  l.truncated = 0.4;
  EXPECT_EQ(difficulty_filter(l, {0, 0, 10, 60}), Difficulty::hard);
  l.truncated = 0.6;
  EXPECT_EQ(difficulty_filter(l, {0, 0, 10, 60}), Difficulty::ignored);
  EXPECT_STREQ(difficulty_name(Difficulty::moderate), "moderate");
}

TEST(GroundTruthRows, RemadeBoxesAndClasses) {
  const auto rows = parse_label_file(
      "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n"
      "Van 0.00 0 1.0 100 100 200 200 2.0 1.8 4.5 3.0 1.7 20.0 0.5\n"
      "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n");
  const CameraIntrinsics K{721.5377, 721.5377, 609.5593, 172.854};
  const auto g = ground_truth_from_labels(rows, {"Car", "Pedestrian", "Cyclist"}, K);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0].category, 0);
  const Box2D r = remake_label_2d(rows[0].box3d(), K);
  EXPECT_EQ(g[0].box2d.u, r.u);
  EXPECT_EQ(g[1].neighbor_of, 0);
  EXPECT_EQ(g[1].category, -1);
  EXPECT_TRUE(g[2].dont_care);
  EXPECT_EQ(g[2].box2d.w, 590.61 - 503.89);
  const auto raw = ground_truth_from_labels(rows, {"Car"});
  EXPECT_EQ(raw[0].box2d.u, (587.01 + 614.12) / 2);
}

TEST(Statistics, ConsistencyBucketsAreLeftClosed) {
  const CameraIntrinsics K{700, 700, 600, 180};
  std::vector<Detection> dets;
  for (double z : {5.0, 15.0, 29.99, 30.0, 60.0}) {
    Detection d;
    d.box3d = {1, 1, z, 1.5, 1.6, 3.9, 0.2};
    d.box2d = remake_label_2d(d.box3d, K);
    dets.push_back(d);
  }
  dets[1].box2d.w *= 2;  // IoU 0.5 with its own remade box
  const auto s = consistency_stat(dets, K);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].count, 1u);
  EXPECT_EQ(s[1].count, 2u);
  EXPECT_EQ(s[2].count, 1u);
  EXPECT_NEAR(*s[0].mean_iou, 1.0, 1e-12);
  EXPECT_NEAR(*s[1].mean_iou, 0.75, 1e-12);
  EXPECT_EQ(s[1].lower, 15.0);
  const auto e = consistency_stat({}, K);
  EXPECT_FALSE(e[0].mean_iou.has_value());
  EXPECT_THROW(consistency_stat(dets, K, {0, 15, 15}), ParameterError);
}

TEST(Statistics, DepthRowMonotoneOnGroundPlaneScene) {
  // Objects resting on a flat road: farther objects sit closer to the horizon.
  const CameraIntrinsics K{721.5377, 721.5377, 609.5593, 172.854};
  std::vector<ObjectLabel> labels;
  for (double z = 4; z <= 60; z += 1.3) {
    ObjectLabel o;
    o.type = "Car";
    o.set_box3d({0.5, 1.65 - 0.75, z, 1.5, 1.6, 3.9, 0.1 * z});
    o.set_box2d(remake_label_2d(o.box3d(), K));
    labels.push_back(o);
  }
  const auto rows = depth_row_stat(labels, 32);
  ASSERT_GE(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GT(rows[i].row_start, rows[i - 1].row_start);
    EXPECT_LT(rows[i].mean_depth, rows[i - 1].mean_depth);
  }
  std::size_t total = 0;
  for (const auto& r : rows) total += r.count;
  EXPECT_EQ(total, labels.size());
  EXPECT_THROW(depth_row_stat(labels, 0), ParameterError);
}

TEST(Report, CsvFormat) {
  const auto csv = format_report_csv({{"AP3D|R40", Difficulty::moderate, 0.7, 0.123456789}});
  EXPECT_EQ(csv, "metric,difficulty,threshold,value\nAP3D|R40,moderate,0.70,0.123457\n");
}
