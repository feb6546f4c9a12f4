#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fadnet/tensor.hpp"

namespace fadnet {

struct GradcheckOptions {
  double eps = 1e-5;
  double tol = 1e-5;
  /// Denominator floor in |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double scale_floor = 1e-3;
  /// Coordinates probed per input tensor; 0 probes every coordinate.
  std::size_t max_coords_per_input = 0;
  /// Extra random-direction probes that perturb all inputs at once.
  std::size_t directional_probes = 0;
  std::uint64_t seed = 1234;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t directions_checked = 0;
  std::string worst;  // "input[i][j]" or "direction k"
  std::vector<std::string> evaluation_errors;
  bool passed = false;
};

/// Scalar function of the inputs; must build its graph on the supplied tape.
using ScalarFn = std::function<Tensor(Tape&)>;

/// Compares reverse-mode gradients of f with central differences. The inputs
/// are perturbed in place and restored before returning.
GradcheckReport gradcheck(const ScalarFn& f, std::vector<Tensor> inputs,
                          const GradcheckOptions& options = {});

}  // namespace fadnet
