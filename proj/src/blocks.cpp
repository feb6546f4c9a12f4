#include "fadnet/blocks.hpp"

#include <cmath>

#include "fadnet/errors.hpp"
#include "fadnet/ops.hpp"

namespace fadnet::nn {

Tensor ParamInit::uniform(Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng_);
  t.set_requires_grad(true);
  return t;
}

Conv2d Conv2d::make(TensorMap& params, ParamInit& init, const std::string& prefix, std::size_t c_in,
                    std::size_t c_out, std::size_t k, std::size_t stride, std::size_t padding) {
  Conv2d c;
  const std::size_t fan_in = c_in * k * k;
  c.weight = init.uniform({c_out, c_in, k, k}, fan_in);
  c.bias = init.uniform({c_out}, fan_in);
  c.stride = stride;
  c.padding = padding;
  params[prefix + ".weight"] = c.weight;
  params[prefix + ".bias"] = c.bias;
  return c;
}

Tensor Conv2d::forward(Tape& tape, const Tensor& x) const {
  return ops::conv2d(tape, x, weight, bias, stride, padding);
}

Upsample Upsample::make(TensorMap& params, ParamInit& init, const std::string& prefix, std::size_t channels,
                        int factor, UpsampleMode mode) {
  if (factor < 1) throw ParameterError("upsample factor must be >= 1");
  Upsample u;
  u.mode = mode;
  u.factor = factor;
  if (mode == UpsampleMode::transposed) {
    const auto k = static_cast<std::size_t>(factor);
    u.weight = init.uniform({channels, channels, k, k}, channels * k * k);
    u.bias = init.uniform({channels}, channels * k * k);
    params[prefix + ".weight"] = u.weight;
    params[prefix + ".bias"] = u.bias;
  }
  return u;
}

Tensor Upsample::forward(Tape& tape, const Tensor& x) const {
  if (mode == UpsampleMode::bilinear) return ops::upsample_bilinear(tape, x, factor);
  return ops::conv_transpose2d(tape, x, weight, bias, static_cast<std::size_t>(factor));
}

HeadBlock HeadBlock::make(TensorMap& params, ParamInit& init, const std::string& prefix, std::size_t c_in,
                          std::size_t mid, std::size_t c_out, std::size_t groups) {
  HeadBlock h;
  h.conv3x3 = Conv2d::make(params, init, prefix + ".conv3x3", c_in, mid, 3, 1, 1);
  h.gn_gamma = Tensor({mid}, 1.0, true);
  h.gn_beta = Tensor({mid}, 0.0, true);
  params[prefix + ".gn.weight"] = h.gn_gamma;
  params[prefix + ".gn.bias"] = h.gn_beta;
  h.groups = groups;
  h.conv1x1 = Conv2d::make(params, init, prefix + ".conv1x1", mid, c_out, 1, 1, 0);
  return h;
}

Tensor HeadBlock::forward(Tape& tape, const Tensor& feature) const {
  if (feature.rank() != 3 || feature.dim(0) != conv3x3.in_channels()) {
    throw DimensionError("head block expects " + std::to_string(conv3x3.in_channels()) +
                         " input channels, got " + shape_str(feature.shape()));
  }
  Tensor y = conv3x3.forward(tape, feature);
  y = ops::group_norm(tape, y, groups, gn_gamma, gn_beta, 1e-5);
  y = ops::relu(tape, y);
  y = conv1x1.forward(tape, y);
  if (!output_scale.empty()) y = ops::scale_channels(tape, y, output_scale);
  return y;
}

ConvGRUCell ConvGRUCell::make(TensorMap& params, ParamInit& init, const std::string& prefix,
                              std::size_t input_channels, std::size_t hidden) {
  ConvGRUCell c;
  const std::size_t in = input_channels + hidden;
  c.update = Conv2d::make(params, init, prefix + ".update.conv", in, hidden, 3, 1, 1);
  c.reset = Conv2d::make(params, init, prefix + ".reset.conv", in, hidden, 3, 1, 1);
  c.candidate = Conv2d::make(params, init, prefix + ".candidate.conv", in, hidden, 3, 1, 1);
  c.hidden = hidden;
  return c;
}

ConvGRUCell::Gates ConvGRUCell::step_with_gates(Tape& tape, const Tensor& x, const Tensor& h_prev) const {
  if (h_prev.rank() != 3 || h_prev.dim(0) != hidden || x.rank() != 3 ||
      x.dim(0) + hidden != update.in_channels() || x.dim(1) != h_prev.dim(1) || x.dim(2) != h_prev.dim(2)) {
    throw DimensionError("convGRU step: input " + shape_str(x.shape()) + " / hidden " +
                         shape_str(h_prev.shape()) + " do not match the cell");
  }
  const Tensor xh = ops::concat_channels(tape, x, h_prev);
  Gates g;
  g.z = ops::sigmoid(tape, update.forward(tape, xh));
  g.r = ops::sigmoid(tape, reset.forward(tape, xh));
  const Tensor xrh = ops::concat_channels(tape, x, ops::mul(tape, g.r, h_prev));
  g.candidate = ops::tanh(tape, candidate.forward(tape, xrh));
  // h = (1 - z) * h_prev + z * candidate = h_prev + z * (candidate - h_prev)
  g.h = ops::add(tape, h_prev, ops::mul(tape, g.z, ops::sub(tape, g.candidate, h_prev)));
  return g;
}

Tensor ConvGRUCell::step(Tape& tape, const Tensor& x, const Tensor& h_prev) const {
  return step_with_gates(tape, x, h_prev).h;
}

DepthHintModule DepthHintModule::make(TensorMap& params, ParamInit& init, const std::string& prefix,
                                      std::size_t deep_channels, std::size_t deep_width) {
  DepthHintModule m;
  m.squeeze = Conv2d::make(params, init, prefix + ".squeeze.conv", deep_channels, 1, 1, 1, 0);
  m.column = Conv2d::make(params, init, prefix + ".column.conv", deep_width, 1, 1, 1, 0);
  return m;
}

std::pair<Tensor, Tensor> DepthHintModule::forward(Tape& tape, const Tensor& deep) const {
  if (deep.rank() != 3 || deep.dim(0) != squeeze.in_channels() || deep.dim(2) != column.in_channels()) {
    throw DimensionError("depth hint module: unexpected deep feature " + shape_str(deep.shape()));
  }
  const std::size_t rows = deep.dim(1);
  const Tensor squeezed = squeeze.forward(tape, deep);                     // [1, H/32, W/32]
  const Tensor by_width = ops::swap_channel_width(tape, squeezed);         // [W/32, H/32, 1]
  const Tensor collapsed = column.forward(tape, by_width);                 // [1, H/32, 1]
  Tensor vec = ops::reshape(tape, collapsed, Shape{rows});
  if (output_scale != 1.0) vec = ops::scale(tape, vec, output_scale);
  const Tensor map = ops::replicate_rows(tape, vec, rows_per_bin, deep.dim(2) * rows_per_bin);
  return {vec, map};
}

BackboneStandIn BackboneStandIn::make(TensorMap& params, ParamInit& init, std::size_t deep_channels,
                                      UpsampleMode mode) {
  BackboneStandIn b;
  b.deep_channels = deep_channels;
  const std::size_t widths[6] = {3, 16, 32, 64, 128, deep_channels};
  for (std::size_t i = 0; i < 5; ++i) {
    b.down[i] = Conv2d::make(params, init, "backbone.down" + std::to_string(i + 1) + ".conv", widths[i],
                             widths[i + 1], 4, 2, 1);
  }
  // Stage i upsamples to stride 32 / 2^(i+1) and fuses the encoder feature of
  // the same stride (128, 64, 32 channels).
  const std::size_t up_in[3] = {deep_channels, kFeatureChannels, kFeatureChannels};
  const std::size_t skip[3] = {128, 64, 32};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string stage = "upsampler.stage" + std::to_string(i + 1);
    b.up[i] = Upsample::make(params, init, stage + ".up", up_in[i], 2, mode);
    b.fuse[i] = Conv2d::make(params, init, stage + ".conv", up_in[i] + skip[i], kFeatureChannels, 3, 1, 1);
  }
  return b;
}

std::pair<Tensor, Tensor> BackboneStandIn::forward(Tape& tape, const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("backbone expects a 3-channel CHW image, got " + shape_str(image.shape()));
  }
  if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0) {
    throw GeometryError("backbone: image " + shape_str(image.shape()) + " is not divisible by 32");
  }
  std::array<Tensor, 5> enc;
  Tensor x = image;
  for (std::size_t i = 0; i < 5; ++i) {
    x = ops::relu(tape, down[i].forward(tape, x));
    enc[i] = x;
  }
  const Tensor deep = enc[4];
  Tensor y = deep;
  for (std::size_t i = 0; i < 3; ++i) {
    y = up[i].forward(tape, y);
    y = ops::concat_channels(tape, y, enc[3 - i]);
    y = ops::relu(tape, fuse[i].forward(tape, y));
  }
  return {deep, y};
}

}  // namespace fadnet::nn
