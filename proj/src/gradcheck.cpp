#include "fadnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fadnet/errors.hpp"

namespace fadnet {
namespace {

double eval_plain(const ScalarFn& f) {
  Tape tape;
  tape.set_recording(false);
  return f(tape).item();
}

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

GradcheckReport gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, const GradcheckOptions& options) {
  if (options.eps < 1e-6 || options.eps > 1e-3) {
    throw ParameterError("gradcheck: eps must lie in [1e-6, 1e-3]");
  }
  for (auto& t : inputs) {
    for (double v : t.values()) {
      if (!std::isfinite(v)) throw ParameterError("gradcheck: non-finite input");
    }
  }

  // Analytic pass.
  std::vector<bool> saved_flags;
  for (auto& t : inputs) {
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.grad();
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor root = f(tape);
    backward(root, tape);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradcheckReport report;
  std::mt19937_64 rng(options.seed);
  const double eps = options.eps;

  auto probe = [&](const std::string& label, double a, double fp, double fm) {
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      report.evaluation_errors.push_back(label + ": non-finite f at perturbed point");
      return;
    }
    const double n = (fp - fm) / (2 * eps);
    const double e = rel_error(a, n, options.scale_floor);
    if (report.worst.empty() || e > report.max_rel_error) {
      report.worst = label;
      report.max_rel_error = e;
    }
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto vals = inputs[i].values();
    std::vector<std::size_t> coords(vals.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t j : coords) {
      const double orig = vals[j];
      vals[j] = orig + eps;
      const double fp = eval_plain(f);
      vals[j] = orig - eps;
      const double fm = eval_plain(f);
      vals[j] = orig;
      probe("input[" + std::to_string(i) + "][" + std::to_string(j) + "]", analytic[i][j], fp, fm);
      ++report.coordinates_checked;
    }
  }

  std::normal_distribution<double> normal;
  for (std::size_t k = 0; k < options.directional_probes; ++k) {
    std::vector<std::vector<double>> dir;
    double norm2 = 0.0;
    for (auto& t : inputs) {
      auto& d = dir.emplace_back(t.numel());
      for (double& v : d) {
        v = normal(rng);
        norm2 += v * v;
      }
    }
    const double inv = 1.0 / std::sqrt(norm2);
    double a = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      for (std::size_t j = 0; j < dir[i].size(); ++j) {
        dir[i][j] *= inv;
        a += analytic[i][j] * dir[i][j];
      }
    auto shift = [&](double s) {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto vals = inputs[i].values();
        for (std::size_t j = 0; j < vals.size(); ++j) vals[j] += s * dir[i][j];
      }
    };
    std::vector<std::vector<double>> backup;
    for (auto& t : inputs) backup.emplace_back(t.values().begin(), t.values().end());
    shift(eps);
    const double fp = eval_plain(f);
    shift(-2 * eps);
    const double fm = eval_plain(f);
    for (std::size_t i = 0; i < inputs.size(); ++i)
      std::copy(backup[i].begin(), backup[i].end(), inputs[i].values().begin());
    probe("direction " + std::to_string(k), a, fp, fm);
    ++report.directions_checked;
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i].set_requires_grad(saved_flags[i]);
  report.passed = report.evaluation_errors.empty() && report.max_rel_error <= options.tol;
  return report;
}

}  // namespace fadnet
