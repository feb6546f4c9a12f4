#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fadnet/blocks.hpp"
#include "fadnet/checkpoint.hpp"

namespace fadnet {

/// Regression output groups in difficulty order.
enum class Group : std::size_t {
  box2d = 0,       // (du2d, dv2d, w, h)
  dim_angle = 1,   // (dH, dW, dL, cos a, sin a)
  offset3d = 2,    // (du3d, dv3d)
  depth = 3,       // (encoded depth)
};

inline constexpr std::array<std::size_t, 4> kGroupChannels = {4, 5, 2, 1};
inline constexpr std::array<const char*, 4> kGroupNames = {"box2d", "dim_angle", "offset3d", "depth"};

struct ModelConfig {
  int categories = 3;
  int height = 384;
  int width = 1280;
  bool enable_fa = true;
  bool enable_dh = true;
  bool reversed_order = false;
  int backbone_width = 128;
  nn::UpsampleMode upsample = nn::UpsampleMode::bilinear;
  std::size_t gn_groups = 8;
  std::uint64_t seed = 0;
  /// Fixed output scale (pixels) of the predicted 2D width and height;
  /// 0 selects height / 4.
  double size_scale = 0.0;
  /// Depth (meters) the depth head and the depth-hint bias start from.
  double depth_prior = 20.0;
  /// Fixed output scale (meters) of the depth-hint vector.
  double hint_scale = 10.0;

  void validate() const;
  double effective_size_scale() const { return size_scale > 0 ? size_scale : height / 4.0; }
  /// Group processed at GRU timestep t (0-based).
  Group group_at_step(std::size_t t) const;
};

/// Flat key=value text; unknown keys are rejected.
ModelConfig parse_model_config(const std::string& text);
std::string format_model_config(const ModelConfig& cfg);

/// Ablation variants: full, baseline (no FA, no DH), fa (FA only), dh (DH
/// only), reversed (full with the group order reversed).
enum class Variant { full, baseline, fa, dh, reversed };
Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
ModelConfig apply_variant(ModelConfig cfg, Variant v);

struct NetworkOutput {
  Tensor heatmap;                // [C, H/4, W/4], sigmoid applied
  std::array<Tensor, 4> groups;  // raw regression maps, indexed by Group
  std::optional<Tensor> hint_vector;  // [H/32] meters, when DH is enabled

  const Tensor& group(Group g) const { return groups[static_cast<std::size_t>(g)]; }
};

/// Parameter group prefixes used for freezing during stage-wise training.
namespace param_groups {
inline constexpr const char* depth_hint = "depth_hint.";
inline constexpr const char* keypoint_head = "heads.keypoint.";
inline constexpr const char* box2d_head = "heads.box2d.";
}  // namespace param_groups

class FadNet {
 public:
  explicit FadNet(ModelConfig cfg);

  NetworkOutput forward(Tape& tape, const Tensor& image) const;

  const ModelConfig& config() const { return cfg_; }
  TensorMap& parameters() { return params_; }
  const TensorMap& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Copies values from a checkpoint; names and shapes must match exactly.
  void load_parameters(const TensorMap& values);

 private:
  ModelConfig cfg_;
  TensorMap params_;
  nn::BackboneStandIn backbone_;
  std::optional<nn::ConvGRUCell> gru_;
  std::optional<nn::DepthHintModule> hint_;
  nn::HeadBlock keypoint_head_;
  std::array<nn::HeadBlock, 4> group_heads_;
};

/// Sorted (name, shape) list of every parameter the configuration creates.
std::vector<std::pair<std::string, Shape>> parameter_inventory(const ModelConfig& cfg);

}  // namespace fadnet
