#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fadnet/gradcheck.hpp"

namespace fadnet {

struct SweepOptions {
  std::uint64_t seed = 1;
  /// Tolerance for primitives and blocks.
  double primitive_tol = 1e-5;
  /// Tolerance for losses and the full-model objective.
  double loss_tol = 1e-4;
  bool include_model = true;
  /// Square input extent of the full-model case (multiple of 32, at most 64).
  int model_size = 64;
  int model_backbone_width = 16;
  /// Sampled coordinates per parameter tensor and random joint directions
  /// for the full-model case.
  std::size_t model_coords_per_tensor = 3;
  std::size_t model_directions = 12;
};

struct SweepResult {
  std::string name;
  double tol = 0.0;
  GradcheckReport report;
  double seconds = 0.0;

  bool passed() const { return report.evaluation_errors.empty() && report.max_rel_error < tol; }
};

/// Central-difference check of every differentiable primitive, the network
/// blocks, each loss term and the full training objective of a two-object
/// toy frame. `on_result` sees each case as it finishes.
std::vector<SweepResult> gradcheck_sweep(const SweepOptions& options = {},
                                         const std::function<void(const SweepResult&)>& on_result = {});

}  // namespace fadnet
