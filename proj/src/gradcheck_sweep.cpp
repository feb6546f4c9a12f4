#include "fadnet/gradcheck_sweep.hpp"

#include <chrono>
#include <random>

#include "fadnet/blocks.hpp"
#include "fadnet/dataset.hpp"
#include "fadnet/errors.hpp"
#include "fadnet/losses.hpp"
#include "fadnet/model.hpp"
#include "fadnet/ops.hpp"

namespace fadnet {
namespace {

class Sweep {
 public:
  Sweep(const SweepOptions& o, const std::function<void(const SweepResult&)>& cb) : opt_(o), cb_(cb), rng_(o.seed) {}

  Tensor random(Shape shape, double lo = -1, double hi = 1, double min_abs = 0.0) {
    std::uniform_real_distribution<double> U(lo, hi);
    Tensor t(std::move(shape), 0.0, true);
    for (double& v : t.values()) {
      do v = U(rng_);
      while (std::abs(v) < min_abs);
    }
    return t;
  }

  // Fixed random projection so every output coordinate reaches the scalar.
  Tensor project(Tape& tape, const Tensor& y, std::uint64_t salt) {
    std::mt19937_64 r(opt_.seed * 7919 + salt);
    std::uniform_real_distribution<double> U(-1, 1);
    Tensor w(y.shape(), 0.0);
    for (double& v : w.values()) v = U(r);
    return ops::sum(tape, ops::mul(tape, y, w));
  }

  void run(const std::string& name, double tol, const ScalarFn& f, std::vector<Tensor> inputs,
           GradcheckOptions go = {}) {
    go.tol = tol;
    go.seed = opt_.seed;
    const auto t0 = std::chrono::steady_clock::now();
    SweepResult r;
    r.name = name;
    r.tol = tol;
    r.report = gradcheck(f, std::move(inputs), go);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cb_) cb_(r);
    results_.push_back(std::move(r));
  }

  std::vector<SweepResult> results() { return std::move(results_); }
  const SweepOptions& opt() const { return opt_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  SweepOptions opt_;
  std::function<void(const SweepResult&)> cb_;
  std::mt19937_64 rng_;
  std::vector<SweepResult> results_;
};

void primitives(Sweep& s) {
  const double tol = s.opt().primitive_tol;
  {
    Tensor x = s.random({3, 6, 7}), w = s.random({4, 3, 3, 3}), b = s.random({4});
    s.run("conv2d 3x3 s1 p1", tol, [&, x, w, b](Tape& t) { return s.project(t, ops::conv2d(t, x, w, b, 1, 1), 1); },
          {x, w, b});
  }
  {
    Tensor x = s.random({2, 8, 8}), w = s.random({3, 2, 4, 4}), b = s.random({3});
    s.run("conv2d 4x4 s2 p1", tol, [&, x, w, b](Tape& t) { return s.project(t, ops::conv2d(t, x, w, b, 2, 1), 2); },
          {x, w, b});
  }
  {
    Tensor x = s.random({3, 4, 4}), w = s.random({3, 2, 2, 2}), b = s.random({2});
    s.run("conv_transpose2d", tol,
          [&, x, w, b](Tape& t) { return s.project(t, ops::conv_transpose2d(t, x, w, b, 2), 3); }, {x, w, b});
  }
  {
    Tensor x = s.random({2, 4, 5});
    s.run("upsample_bilinear", tol, [&, x](Tape& t) { return s.project(t, ops::upsample_bilinear(t, x, 2), 4); },
          {x});
  }
  {
    Tensor x = s.random({4, 5, 5}, -2, 2), g = s.random({4}), b = s.random({4});
    s.run("group_norm", tol, [&, x, g, b](Tape& t) { return s.project(t, ops::group_norm(t, x, 2, g, b), 5); },
          {x, g, b});
  }
  for (auto [kind, name] : {std::pair{ops::Pointwise::relu, "relu"}, {ops::Pointwise::sigmoid, "sigmoid"},
                            {ops::Pointwise::tanh, "tanh"}}) {
    Tensor x = s.random({2, 4, 4}, -3, 3, 0.05);
    s.run(name, tol, [&, x, kind](Tape& t) { return s.project(t, ops::pointwise(t, x, kind), 6); }, {x});
  }
  {
    Tensor a = s.random({2, 3, 3}), b = s.random({3, 3, 3});
    s.run("concat/slice", tol,
          [&, a, b](Tape& t) {
            Tensor c = ops::concat_channels(t, a, b);
            return s.project(t, ops::mul(t, ops::slice_channels(t, c, 0, 2), ops::slice_channels(t, c, 3, 5)), 7);
          },
          {a, b});
  }
  {
    Tensor a = s.random({2, 3, 4}), b = s.random({2, 3, 4});
    s.run("add/sub/mul/scale", tol,
          [&, a, b](Tape& t) {
            Tensor y = ops::mul(t, ops::add(t, a, b), ops::sub(t, a, ops::scale(t, b, 1.7)));
            return s.project(t, ops::add_scalar(t, y, 0.3), 8);
          },
          {a, b});
  }
  {
    Tensor a = s.random({3, 2, 4});
    s.run("scale_channels", tol,
          [&, a](Tape& t) { return s.project(t, ops::scale_channels(t, a, {0.5, -2.0, 3.0}), 9); }, {a});
  }
  {
    Tensor a = s.random({2, 3, 3});
    s.run("sum/mean", tol,
          [&, a](Tape& t) {
            Tensor sq = ops::mul(t, a, a);
            return ops::add(t, ops::sum(t, sq), ops::scale(t, ops::mean(t, ops::mul(t, sq, a)), 3.0));
          },
          {a});
  }
  {
    Tensor a = s.random({1}), b = s.random({1}), c = s.random({1});
    s.run("weighted_sum", tol,
          [&, a, b, c](Tape& t) {
            Tensor w = ops::weighted_sum(t, {a, b, c}, {1.0, 2.5, -0.5});
            return ops::sum(t, ops::mul(t, w, w));
          },
          {a, b, c});
  }
  {
    Tensor a = s.random({2, 3, 4});
    s.run("reshape/gather", tol,
          [&, a](Tape& t) {
            Tensor flat = ops::reshape(t, a, Shape{24});
            return s.project(t, ops::gather(t, flat, {0, 5, 5, 23, 11}), 10);
          },
          {a});
  }
  {
    Tensor a = s.random({3, 2, 5});
    s.run("swap_channel_width", tol, [&, a](Tape& t) { return s.project(t, ops::swap_channel_width(t, a), 11); },
          {a});
  }
  {
    Tensor v = s.random({3});
    s.run("replicate_rows", tol, [&, v](Tape& t) { return s.project(t, ops::replicate_rows(t, v, 2, 4), 12); }, {v});
  }
}

void blocks(Sweep& s) {
  const double tol = s.opt().primitive_tol;
  {
    TensorMap params;
    nn::ParamInit init(s.opt().seed + 1);
    auto h = nn::HeadBlock::make(params, init, "head", 4, 8, 3, 2);
    Tensor x = s.random({4, 4, 4});
    std::vector<Tensor> in = {x};
    for (auto& [n, p] : params) in.push_back(p);
    s.run("head block", tol, [&, h, x](Tape& t) { return s.project(t, h.forward(t, x), 20); }, in);
  }
  {
    TensorMap params;
    nn::ParamInit init(s.opt().seed + 2);
    auto up = nn::Upsample::make(params, init, "up", 2, 2, nn::UpsampleMode::transposed);
    Tensor x = s.random({2, 3, 3});
    std::vector<Tensor> in = {x};
    for (auto& [n, p] : params) in.push_back(p);
    s.run("transposed upsample", tol, [&, up, x](Tape& t) { return s.project(t, up.forward(t, x), 21); }, in);
  }
  {
    TensorMap params;
    nn::ParamInit init(s.opt().seed + 3);
    auto cell = nn::ConvGRUCell::make(params, init, "gru", 3, 4);
    Tensor x = s.random({3, 4, 4}), h = s.random({4, 4, 4});
    std::vector<Tensor> in = {x, h};
    for (auto& [n, p] : params) in.push_back(p);
    s.run("conv gru", tol, [&, cell, x, h](Tape& t) { return s.project(t, cell.step(t, x, h), 22); }, in);
  }
  {
    TensorMap params;
    nn::ParamInit init(s.opt().seed + 4);
    auto dh = nn::DepthHintModule::make(params, init, "dh", 4, 3);
    Tensor x = s.random({4, 2, 3});
    std::vector<Tensor> in = {x};
    for (auto& [n, p] : params) in.push_back(p);
    s.run("depth hint", tol,
          [&, dh, x](Tape& t) {
            auto [vec, map] = dh.forward(t, x);
            return ops::add(t, s.project(t, vec, 23), s.project(t, map, 24));
          },
          in);
  }
}

void losses(Sweep& s, const Sample& sample, const DimensionTemplate& dims) {
  const double tol = s.opt().loss_tol;
  const auto& tg = sample.targets;
  const auto& K = sample.frame.intrinsics;
  const std::size_t h = tg.heatmap.dim(1), w = tg.heatmap.dim(2);
  {
    Tensor logits = s.random({tg.heatmap.dim(0), h, w}, -3, 3);
    s.run("keypoint loss", tol,
          [&, logits](Tape& t) {
            return keypoint_loss(t, ops::sigmoid(t, logits), tg.heatmap, tg.objects.size());
          },
          {logits});
  }
  {
    Tensor m = s.random({4, h, w}, -3, 3);
    s.run("reg2d loss", tol, [&, m](Tape& t) { return disentangled_reg2d(t, m, tg.objects, 0.4); }, {m});
  }
  {
    Tensor da = s.random({5, h, w}, -0.5, 0.5), off = s.random({2, h, w}, -2, 2),
           dep = s.random({1, h, w}, -3.5, -2.0);
    s.run("reg3d loss", tol,
          [&, da, off, dep](Tape& t) { return disentangled_reg3d(t, da, off, dep, tg.objects, K, dims); },
          {da, off, dep});
  }
  {
    Tensor p = s.random({tg.hint.size()}, 0, 60);
    s.run("depth hint loss", tol, [&, p](Tape& t) { return depth_hint_loss(t, p, tg.hint, tg.hint_mask); }, {p});
  }
}

void full_model(Sweep& s, const Sample& sample, const DimensionTemplate& dims) {
  ModelConfig mc;
  mc.height = mc.width = s.opt().model_size;
  mc.backbone_width = s.opt().model_backbone_width;
  mc.seed = s.opt().seed;
  auto model = std::make_shared<FadNet>(mc);
  std::vector<Tensor> in;
  for (auto& [n, p] : model->parameters()) in.push_back(p);
  GradcheckOptions go;
  go.max_coords_per_input = s.opt().model_coords_per_tensor;
  go.directional_probes = s.opt().model_directions;
  s.run("total loss through full model", s.opt().loss_tol,
        [model, &sample, &dims](Tape& t) {
          const NetworkOutput out = model->forward(t, sample.image);
          return total_loss(t, compute_losses(t, out, sample.targets, sample.frame.intrinsics, dims));
        },
        in, go);
}

}  // namespace

std::vector<SweepResult> gradcheck_sweep(const SweepOptions& options,
                                         const std::function<void(const SweepResult&)>& on_result) {
  if (options.model_size < 32 || options.model_size > 64 || options.model_size % 32 != 0) {
    throw ParameterError("gradcheck sweep: model size must be 32 or 64");
  }
  Sweep s(options, on_result);
  primitives(s);
  blocks(s);
  SyntheticConfig sc;
  sc.height = sc.width = options.model_size;
  Dataset ds = synthetic_dataset(options.seed, 1, 2, sc);
  const Sample& sample = ds.samples.at(0);
  losses(s, sample, ds.target_config.dims);
  if (options.include_model) full_model(s, sample, ds.target_config.dims);
  return s.results();
}

}  // namespace fadnet
