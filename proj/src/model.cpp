#include "fadnet/model.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "fadnet/errors.hpp"
#include "fadnet/geometry.hpp"
#include "fadnet/ops.hpp"

namespace fadnet {

namespace {

constexpr std::size_t kKeypointMid = 256;
constexpr std::size_t kRegressionMid = 32;
// Heatmap logits start near sigmoid^-1(0.1), the usual focal-loss prior.
constexpr double kHeatmapPriorBias = -2.19;

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ParameterError("model config: '" + key + "' expects true/false, got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ParameterError("model config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ParameterError("model config: '" + key + "' expects a number, got '" + v + "'");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ModelConfig::validate() const {
  if (categories < 1) throw ParameterError("model config: categories must be >= 1");
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0) {
    throw ParameterError("model config: height and width must be positive multiples of 32");
  }
  if (backbone_width < 1) throw ParameterError("model config: backbone_width must be >= 1");
  if (reversed_order && !enable_fa) {
    throw ParameterError("model config: reversed_order requires enable_fa");
  }
  if (size_scale < 0) throw ParameterError("model config: size_scale must be >= 0");
  if (!(depth_prior > 0)) throw ParameterError("model config: depth_prior must be positive");
  if (!(hint_scale > 0)) throw ParameterError("model config: hint_scale must be positive");
  if (gn_groups == 0 || kRegressionMid % gn_groups != 0 || kKeypointMid % gn_groups != 0) {
    throw ParameterError("model config: gn_groups must divide the head widths");
  }
}

Group ModelConfig::group_at_step(std::size_t t) const {
  if (t >= 4) throw ParameterError("timestep out of range");
  return static_cast<Group>(reversed_order ? 3 - t : t);
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("model config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "categories") cfg.categories = parse_int(key, val);
    else if (key == "height") cfg.height = parse_int(key, val);
    else if (key == "width") cfg.width = parse_int(key, val);
    else if (key == "enable_fa") cfg.enable_fa = parse_bool(key, val);
    else if (key == "enable_dh") cfg.enable_dh = parse_bool(key, val);
    else if (key == "reversed_order") cfg.reversed_order = parse_bool(key, val);
    else if (key == "backbone_width") cfg.backbone_width = parse_int(key, val);
    else if (key == "gn_groups") cfg.gn_groups = static_cast<std::size_t>(parse_int(key, val));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(val));
    else if (key == "size_scale") cfg.size_scale = parse_double(key, val);
    else if (key == "depth_prior") cfg.depth_prior = parse_double(key, val);
    else if (key == "hint_scale") cfg.hint_scale = parse_double(key, val);
    else if (key == "upsample") {
      if (val == "bilinear") cfg.upsample = nn::UpsampleMode::bilinear;
      else if (val == "transposed") cfg.upsample = nn::UpsampleMode::transposed;
      else throw ParameterError("model config: upsample must be bilinear or transposed");
    } else {
      throw ParameterError("model config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string format_model_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "categories=" << cfg.categories << '\n'
     << "height=" << cfg.height << '\n'
     << "width=" << cfg.width << '\n'
     << "enable_fa=" << (cfg.enable_fa ? "true" : "false") << '\n'
     << "enable_dh=" << (cfg.enable_dh ? "true" : "false") << '\n'
     << "reversed_order=" << (cfg.reversed_order ? "true" : "false") << '\n'
     << "backbone_width=" << cfg.backbone_width << '\n'
     << "upsample=" << (cfg.upsample == nn::UpsampleMode::bilinear ? "bilinear" : "transposed") << '\n'
     << "gn_groups=" << cfg.gn_groups << '\n'
     << "seed=" << cfg.seed << '\n'
     << "size_scale=" << cfg.size_scale << '\n'
     << "depth_prior=" << cfg.depth_prior << '\n'
     << "hint_scale=" << cfg.hint_scale << '\n';
  return os.str();
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "baseline") return Variant::baseline;
  if (name == "fa") return Variant::fa;
  if (name == "dh") return Variant::dh;
  if (name == "reversed") return Variant::reversed;
  throw ParameterError("unknown variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::baseline: return "baseline";
    case Variant::fa: return "fa";
    case Variant::dh: return "dh";
    case Variant::reversed: return "reversed";
  }
  return "?";
}

ModelConfig apply_variant(ModelConfig cfg, Variant v) {
  cfg.enable_fa = v == Variant::full || v == Variant::fa || v == Variant::reversed;
  cfg.enable_dh = v == Variant::full || v == Variant::dh || v == Variant::reversed;
  cfg.reversed_order = v == Variant::reversed;
  return cfg;
}

FadNet::FadNet(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::ParamInit init(cfg_.seed);
  const auto cb = static_cast<std::size_t>(cfg_.backbone_width);
  backbone_ = nn::BackboneStandIn::make(params_, init, cb, cfg_.upsample);
  if (cfg_.enable_fa) {
    gru_ = nn::ConvGRUCell::make(params_, init, "gru", nn::kFeatureChannels, nn::kFeatureChannels);
  }
  if (cfg_.enable_dh) {
    hint_ = nn::DepthHintModule::make(params_, init, "depth_hint", cb, static_cast<std::size_t>(cfg_.width / 32));
  }
  keypoint_head_ = nn::HeadBlock::make(params_, init, "heads.keypoint", nn::kFeatureChannels, kKeypointMid,
                                       static_cast<std::size_t>(cfg_.categories), cfg_.gn_groups);
  std::fill(keypoint_head_.conv1x1.bias.values().begin(), keypoint_head_.conv1x1.bias.values().end(),
            kHeatmapPriorBias);
  for (std::size_t g = 0; g < 4; ++g) {
    const bool widened = cfg_.enable_dh && static_cast<Group>(g) == Group::depth;
    group_heads_[g] = nn::HeadBlock::make(params_, init, std::string("heads.") + kGroupNames[g],
                                          nn::kFeatureChannels + (widened ? 1 : 0), kRegressionMid,
                                          kGroupChannels[g], cfg_.gn_groups);
  }
  // Box sizes are regressed in input pixels; a fixed output scale keeps the
  // required head weights of order one.
  const double s = cfg_.effective_size_scale();
  group_heads_[static_cast<std::size_t>(Group::box2d)].output_scale = {1.0, 1.0, s, s};
  group_heads_[static_cast<std::size_t>(Group::depth)].conv1x1.bias.values()[0] = encode_depth(cfg_.depth_prior);
  if (hint_) {
    hint_->output_scale = cfg_.hint_scale;
    hint_->column.bias.values()[0] = cfg_.depth_prior / cfg_.hint_scale;
  }
}

NetworkOutput FadNet::forward(Tape& tape, const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != static_cast<std::size_t>(cfg_.height) ||
      image.dim(2) != static_cast<std::size_t>(cfg_.width)) {
    throw DimensionError("forward: image " + shape_str(image.shape()) + " does not match the configured " +
                         std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width));
  }
  NetworkOutput out;
  const auto [deep, feat] = backbone_.forward(tape, image);
  out.heatmap = ops::sigmoid(tape, keypoint_head_.forward(tape, feat));

  Tensor hint_map;
  if (hint_) {
    auto [vec, map] = hint_->forward(tape, deep);
    out.hint_vector = vec;
    hint_map = map;
  }
  auto head_input = [&](Group g, const Tensor& base) {
    if (hint_ && g == Group::depth) return ops::concat_channels(tape, base, hint_map);
    return base;
  };

  if (gru_) {
    Tensor h(feat.shape(), 0.0);
    for (std::size_t t = 0; t < 4; ++t) {
      h = gru_->step(tape, feat, h);
      const Group g = cfg_.group_at_step(t);
      out.groups[static_cast<std::size_t>(g)] =
          group_heads_[static_cast<std::size_t>(g)].forward(tape, head_input(g, h));
    }
  } else {
    for (std::size_t g = 0; g < 4; ++g) {
      out.groups[g] = group_heads_[g].forward(tape, head_input(static_cast<Group>(g), feat));
    }
  }
  return out;
}

std::size_t FadNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void FadNet::load_parameters(const TensorMap& values) {
  for (auto& [name, t] : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw ParseError("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw DimensionError("checkpoint parameter '" + name + "' has shape " + shape_str(it->second.shape()) +
                           ", model expects " + shape_str(t.shape()));
    }
    std::copy(it->second.values().begin(), it->second.values().end(), t.values().begin());
  }
  for (const auto& [name, t] : values) {
    if (!params_.contains(name)) throw ParseError("checkpoint has unexpected parameter '" + name + "'");
  }
}

std::vector<std::pair<std::string, Shape>> parameter_inventory(const ModelConfig& cfg) {
  const FadNet net(cfg);
  std::vector<std::pair<std::string, Shape>> inv;
  for (const auto& [name, t] : net.parameters()) inv.emplace_back(name, t.shape());
  return inv;
}

}  // namespace fadnet
