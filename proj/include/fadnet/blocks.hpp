#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "fadnet/checkpoint.hpp"
#include "fadnet/tensor.hpp"

// Network building blocks. Every block registers its parameters in a shared
// TensorMap under "module.block.layer.{weight|bias}" names and keeps handles
// to them, so updating the map updates the block.
namespace fadnet::nn {

class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}
  /// Uniform in +-sqrt(1 / fan_in).
  Tensor uniform(Shape shape, std::size_t fan_in);
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

struct Conv2d {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;    // [C_out]
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2d make(TensorMap& params, ParamInit& init, const std::string& prefix, std::size_t c_in,
                     std::size_t c_out, std::size_t k, std::size_t stride, std::size_t padding);
  std::size_t in_channels() const { return weight.dim(1); }
  Tensor forward(Tape& tape, const Tensor& x) const;
};

enum class UpsampleMode { bilinear, transposed };

/// Resolution increase by `factor`: fixed bilinear resize, or a learned
/// transposed convolution with kernel = stride = factor.
struct Upsample {
  UpsampleMode mode = UpsampleMode::bilinear;
  int factor = 2;
  Tensor weight;  // transposed mode only: [C, C, factor, factor]
  Tensor bias;

  static Upsample make(TensorMap& params, ParamInit& init, const std::string& prefix,
                       std::size_t channels, int factor, UpsampleMode mode);
  Tensor forward(Tape& tape, const Tensor& x) const;
};

/// conv3x3 -> GroupNorm -> ReLU -> conv1x1, spatial size preserved.
struct HeadBlock {
  Conv2d conv3x3;
  Tensor gn_gamma;
  Tensor gn_beta;
  std::size_t groups = 8;
  Conv2d conv1x1;
  /// Fixed per-channel multiplier on the conv1x1 output; empty means none.
  std::vector<double> output_scale;

  static HeadBlock make(TensorMap& params, ParamInit& init, const std::string& prefix, std::size_t c_in,
                        std::size_t mid, std::size_t c_out, std::size_t groups);
  Tensor forward(Tape& tape, const Tensor& feature) const;
};

/// Convolutional GRU: gates read [x; h_prev], the candidate reads [x; r * h_prev].
struct ConvGRUCell {
  Conv2d update;
  Conv2d reset;
  Conv2d candidate;
  std::size_t hidden = 64;

  static ConvGRUCell make(TensorMap& params, ParamInit& init, const std::string& prefix,
                          std::size_t input_channels, std::size_t hidden);
  Tensor step(Tape& tape, const Tensor& x, const Tensor& h_prev) const;

  struct Gates {
    Tensor z, r, candidate, h;
  };
  /// Same computation as step(), exposing the gate activations.
  Gates step_with_gates(Tape& tape, const Tensor& x, const Tensor& h_prev) const;
};

/// Row-wise depth hint: squeeze channels, then collapse width, leaving one
/// value (meters) per 32-pixel image row band.
struct DepthHintModule {
  Conv2d squeeze;  // C_b -> 1, 1x1
  Conv2d column;   // W/32 -> 1, 1x1, applied after moving width onto channels
  std::size_t rows_per_bin = 8;
  /// Fixed multiplier (meters) on the column conv output.
  double output_scale = 1.0;

  static DepthHintModule make(TensorMap& params, ParamInit& init, const std::string& prefix,
                              std::size_t deep_channels, std::size_t deep_width);
  /// Returns (hint vector [H/32], hint map [1, H/4, W/4]).
  std::pair<Tensor, Tensor> forward(Tape& tape, const Tensor& deep_feature) const;
};

/// Plain-convolution stand-in for the DLA-34 + upsampling backbone.
///
/// Five stride-2 4x4 convolutions (padding 1) with ReLU (3->16->32->64->128->C_b) give the
/// stride-32 feature. Three x2 upsampling stages, each followed by a 3x3
/// convolution over [upsampled; same-stride encoder feature], bring it back
/// to the stride-4, 64-channel output feature.
struct BackboneStandIn {
  std::array<Conv2d, 5> down;
  std::array<Upsample, 3> up;
  std::array<Conv2d, 3> fuse;
  std::size_t deep_channels = 128;

  static BackboneStandIn make(TensorMap& params, ParamInit& init, std::size_t deep_channels,
                              UpsampleMode mode);
  /// Returns (deep [C_b, H/32, W/32], feat [64, H/4, W/4]).
  std::pair<Tensor, Tensor> forward(Tape& tape, const Tensor& image) const;
};

inline constexpr std::size_t kFeatureChannels = 64;

}  // namespace fadnet::nn
