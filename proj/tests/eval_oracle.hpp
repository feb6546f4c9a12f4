#pragma once

// Brute-force AP oracle: re-runs greedy matching from scratch for every score
// threshold and reads precision/recall off each prefix. Restricted to cases
// where every ground truth of the evaluated category is valid (no DontCare,
// no neighbour classes, all boxes tall enough for the chosen difficulty).

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "fadnet/metrics.hpp"

namespace fadnet::testing {

inline double oracle_overlap(const Detection& d, const GroundTruth& g, MetricKind kind) {
  switch (kind) {
    case MetricKind::bev:
      return iou_bev(d.box3d, g.box3d);
    case MetricKind::box3d:
      return iou_3d(d.box3d, g.box3d);
    default:
      return iou_2d(d.box2d, g.box2d);
  }
}

inline double brute_force_ap(const std::vector<EvalImage>& images, const EvalConfig& cfg, bool similarity) {
  std::size_t n_gt = 0;
  std::set<double> scores;
  for (const auto& im : images) {
    for (const auto& g : im.ground_truth) n_gt += g.category == cfg.category;
    for (const auto& d : im.detections)
      if (d.category == cfg.category) scores.insert(d.score);
  }
  const int n_pts = cfg.interpolation == Interpolation::r11 ? 11 : 40;
  std::vector<double> best(static_cast<std::size_t>(n_pts), 0.0);
  if (n_gt == 0) return 0.0;
  for (double t : scores) {
    double tp = 0, fp = 0;
    // Similarities summed in the global (score, image, index) order so the
    // floating-point total is reproducible.
    std::vector<std::tuple<double, std::size_t, std::size_t, double>> sims;
    for (std::size_t ii = 0; ii < images.size(); ++ii) {
      const auto& im = images[ii];
      std::vector<const Detection*> ds;
      for (const auto& d : im.detections)
        if (d.category == cfg.category && d.score >= t) ds.push_back(&d);
      std::stable_sort(ds.begin(), ds.end(), [](auto* a, auto* b) { return a->score > b->score; });
      std::vector<bool> used(im.ground_truth.size(), false);
      for (const auto* d : ds) {
        int pick = -1;
        double pick_o = -1;
        for (std::size_t j = 0; j < im.ground_truth.size(); ++j) {
          const auto& g = im.ground_truth[j];
          if (g.category != cfg.category || used[j]) continue;
          const double o = oracle_overlap(*d, g, cfg.metric);
          if (o >= cfg.iou_threshold && o > pick_o) {
            pick = static_cast<int>(j);
            pick_o = o;
          }
        }
        if (pick < 0) {
          fp += 1;
        } else {
          used[static_cast<std::size_t>(pick)] = true;
          tp += 1;
          sims.emplace_back(-d->score, ii, static_cast<std::size_t>(d - im.detections.data()),
                            (1 + std::cos(im.ground_truth[static_cast<std::size_t>(pick)].alpha - d->alpha)) / 2);
        }
      }
    }
    std::sort(sims.begin(), sims.end());
    double sim = 0;
    for (const auto& e : sims) sim += std::get<3>(e);
    const double recall = tp / static_cast<double>(n_gt);
    const double prec = (similarity ? sim : tp) / (tp + fp);
    for (int i = 0; i < n_pts; ++i) {
      const double r = cfg.interpolation == Interpolation::r11 ? i / 10.0 : (i + 1) / 40.0;
      if (recall >= r) best[static_cast<std::size_t>(i)] = std::max(best[static_cast<std::size_t>(i)], prec);
    }
  }
  double acc = 0;
  for (double b : best) acc += b;
  return acc / n_pts;
}

/// Random evaluation case: 1-3 images, at most `max_dets` detections overall,
/// detections jittered around gts or placed at random, all boxes >= 45 px tall.
inline std::vector<EvalImage> random_eval_case(std::mt19937_64& rng, std::size_t max_dets) {
  std::uniform_real_distribution<double> U(0, 1);
  std::uniform_int_distribution<int> n_img(1, 3);
  const int images = n_img(rng);
  std::vector<EvalImage> out(static_cast<std::size_t>(images));
  std::size_t budget = max_dets;
  for (auto& im : out) {
    const int n_gt = static_cast<int>(U(rng) * 4);
    for (int k = 0; k < n_gt; ++k) {
      GroundTruth g;
      g.category = U(rng) < 0.8 ? 0 : 1;
      g.level = Difficulty::easy;
      const double z = 5 + 40 * U(rng);
      g.box3d = {-8 + 16 * U(rng), 1.0, z, 1.5, 1.6, 3.9, -3 + 6 * U(rng)};
      g.box2d = {100 + 1000 * U(rng), 150 + 50 * U(rng), 60 + 80 * U(rng), 50 + 60 * U(rng)};
      g.alpha = -3 + 6 * U(rng);
      im.ground_truth.push_back(g);
    }
    const std::size_t n_det = std::min<std::size_t>(budget, static_cast<std::size_t>(U(rng) * 8));
    budget -= n_det;
    for (std::size_t k = 0; k < n_det; ++k) {
      Detection d;
      d.category = U(rng) < 0.85 ? 0 : 1;
      d.score = std::round(U(rng) * 10) / 10;  // ties on purpose
      if (!im.ground_truth.empty() && U(rng) < 0.7) {
        const auto& g = im.ground_truth[static_cast<std::size_t>(U(rng) * im.ground_truth.size())];
        const double j = 0.3 * U(rng);
        d.box2d = {g.box2d.u + j * g.box2d.w * (U(rng) - 0.5), g.box2d.v, g.box2d.w * (1 + j * (U(rng) - 0.5)),
                   g.box2d.h};
        d.box3d = g.box3d;
        d.box3d.x += j * 2 * (U(rng) - 0.5);
        d.box3d.z += j * 4 * (U(rng) - 0.5);
        d.box3d.theta += j * (U(rng) - 0.5);
        d.alpha = g.alpha + 3 * (U(rng) - 0.5);
      } else {
        d.box2d = {100 + 1000 * U(rng), 150 + 50 * U(rng), 60 + 80 * U(rng), 50 + 60 * U(rng)};
        d.box3d = {-8 + 16 * U(rng), 1.0, 5 + 40 * U(rng), 1.5, 1.6, 3.9, 0.0};
        d.alpha = -3 + 6 * U(rng);
      }
      im.detections.push_back(d);
    }
  }
  return out;
}

}  // namespace fadnet::testing
