#include "fadnet/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fadnet/errors.hpp"
#include "fadnet/log.hpp"
#include "fadnet/ops.hpp"

namespace fadnet {
namespace {

bool has_prefix(const std::string& name, const std::string& prefix) { return name.rfind(prefix, 0) == 0; }

std::vector<Stage> three_stages(const ModelConfig& model, int e1, int e2, int e3, int halving) {
  const std::vector<std::string> hint =
      model.enable_dh ? std::vector<std::string>{param_groups::depth_hint} : std::vector<std::string>{};
  Stage s1{"stage1", e1, 2e-4, halving, {}, {}, 0.0};
  Stage s2{"stage2", e2, 3e-5, halving, hint, {}, 0.0};
  s2.losses.depth_hint = false;
  Stage s3{"stage3", e3, 3e-5, halving, hint, {}, 1e-5};
  s3.frozen.push_back(param_groups::keypoint_head);
  s3.frozen.push_back(param_groups::box2d_head);
  s3.losses = {false, false, true, false};
  return {s1, s2, s3};
}

}  // namespace

void StageSchedule::validate(const FadNet& model) const {
  if (stages.empty()) throw ParameterError("schedule: at least one stage is required");
  for (const auto& s : stages) {
    if (s.epochs < 1) throw ParameterError("schedule: stage '" + s.name + "' needs at least one epoch");
    if (!(s.lr > 0)) throw ParameterError("schedule: stage '" + s.name + "' needs a positive learning rate");
    if (s.lr_halving_period < 0 || s.weight_decay < 0) {
      throw ParameterError("schedule: stage '" + s.name + "' has a negative halving period or weight decay");
    }
    for (const auto& prefix : s.frozen) {
      const auto& params = model.parameters();
      const bool found = std::any_of(params.begin(), params.end(),
                                     [&](const auto& kv) { return has_prefix(kv.first, prefix); });
      if (!found) throw ParameterError("schedule: frozen group '" + prefix + "' matches no model parameter");
    }
  }
}

int StageSchedule::total_epochs() const {
  int n = 0;
  for (const auto& s : stages) n += s.epochs;
  return n;
}

StageSchedule StageSchedule::desk(const ModelConfig& model) { return {three_stages(model, 9, 3, 3, 3)}; }
StageSchedule StageSchedule::full_scale(const ModelConfig& model) { return {three_stages(model, 90, 30, 30, 30)}; }

std::string format_log_header() { return "epoch,lr,L_kp,L_reg2d,L_reg3d,L_dh,total"; }

std::string format_log_row(const EpochLog& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.epoch << ',' << r.lr << ',' << r.keypoint << ',' << r.reg2d << ',' << r.reg3d << ',' << r.depth_hint
     << ',' << r.total;
  return os.str();
}

std::uint64_t parameter_checksum(const TensorMap& params, const std::vector<std::string>& prefixes) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : params) {
    const bool selected = prefixes.empty() || std::any_of(prefixes.begin(), prefixes.end(), [&](const auto& p) {
                            return has_prefix(name, p);
                          });
    if (!selected) continue;
    for (char c : name) mix(static_cast<unsigned char>(c));
    for (double v : t.values()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

Trainer::Trainer(FadNet& model, const Dataset& data, TrainConfig cfg)
    : model_(model), data_(data), cfg_(std::move(cfg)) {
  if (data_.samples.empty()) throw ParameterError("trainer: dataset is empty");
  if (cfg_.batch_size < 1 || cfg_.passes_per_epoch < 1) {
    throw ParameterError("trainer: batch size and passes per epoch must be >= 1");
  }
  model_.config().validate();
  cfg_.schedule.validate(model_);
  for (const auto& [name, t] : model_.parameters()) {
    m_[name].assign(t.numel(), 0.0);
    v_[name].assign(t.numel(), 0.0);
  }
  for (const auto& [name, t] : model_.parameters()) last_good_["param." + name] = t.clone();
}

bool Trainer::finished() const { return epoch_ >= cfg_.schedule.total_epochs(); }

std::size_t Trainer::current_stage() const {
  int remaining = epoch_;
  for (std::size_t s = 0; s < cfg_.schedule.stages.size(); ++s) {
    if (remaining < cfg_.schedule.stages[s].epochs) return s;
    remaining -= cfg_.schedule.stages[s].epochs;
  }
  return cfg_.schedule.stages.size();
}

double Trainer::learning_rate(int epoch) const {
  int local = epoch - 1;
  for (const auto& s : cfg_.schedule.stages) {
    if (local < s.epochs) {
      const int halvings = s.lr_halving_period > 0 ? local / s.lr_halving_period : 0;
      return s.lr * std::ldexp(1.0, -halvings);
    }
    local -= s.epochs;
  }
  throw ParameterError("trainer: epoch " + std::to_string(epoch) + " is beyond the schedule");
}

std::uint64_t Trainer::frozen_checksum(const Stage& stage) const {
  return stage.frozen.empty() ? 0 : parameter_checksum(model_.parameters(), stage.frozen);
}

bool Trainer::is_frozen(const std::string& name, const Stage& stage) const {
  return std::any_of(stage.frozen.begin(), stage.frozen.end(), [&](const auto& p) { return has_prefix(name, p); });
}

void Trainer::begin_stage(std::size_t stage) {
  const Stage& st = cfg_.schedule.stages[stage];
  for (auto& [name, t] : model_.parameters()) t.set_requires_grad(!is_frozen(name, st));
  if (!stage_checksum_) stage_checksum_ = frozen_checksum(st);
}

void Trainer::end_stage(std::size_t stage) {
  const Stage& st = cfg_.schedule.stages[stage];
  const std::uint64_t after = frozen_checksum(st);
  frozen_checks_.push_back({stage, *stage_checksum_, after});
  stage_checksum_.reset();
  for (auto& [name, t] : model_.parameters()) t.set_requires_grad(true);
  if (frozen_checks_.back().before != after) {
    throw ContractError("trainer: frozen parameters of '" + st.name + "' changed during the stage");
  }
}

void Trainer::adam_update(const Stage& stage, double lr) {
  ++step_;
  const auto& a = cfg_.adam;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(a.beta1, t);
  const double c2 = 1.0 - std::pow(a.beta2, t);
  for (auto& [name, p] : model_.parameters()) {
    if (is_frozen(name, stage) || !p.has_grad()) continue;
    auto w = p.values();
    auto g = p.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + stage.weight_decay * w[i];
      m[i] = a.beta1 * m[i] + (1 - a.beta1) * gi;
      v[i] = a.beta2 * v[i] + (1 - a.beta2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + a.eps);
    }
  }
}

LossParts Trainer::evaluate(const Sample& s) const {
  Tape tape;
  tape.set_recording(false);
  const NetworkOutput out = model_.forward(tape, s.image);
  return compute_losses(tape, out, s.targets, s.frame.intrinsics, data_.target_config.dims, cfg_.loss);
}

EpochLog Trainer::run_epoch() {
  if (finished()) throw ContractError("trainer: schedule already complete");
  const std::size_t stage = current_stage();
  const Stage& st = cfg_.schedule.stages[stage];
  const int epoch = epoch_ + 1;
  const double lr = learning_rate(epoch);
  begin_stage(stage);

  const std::size_t n = data_.samples.size();
  const double inv_b = 1.0 / static_cast<double>(cfg_.batch_size);
  std::array<double, 4> sums{};
  std::size_t evaluated = 0;
  try {
    for (std::size_t pass = 0; pass < cfg_.passes_per_epoch; ++pass) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::seed_seq seq{cfg_.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(pass)};
      std::mt19937_64 rng(seq);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < n; start += cfg_.batch_size) {
        for (auto& [name, p] : model_.parameters()) p.zero_grad();
        const std::size_t stop = std::min(n, start + cfg_.batch_size);
        for (std::size_t k = start; k < stop; ++k) {
          const Sample& s = data_.samples[order[k]];
          Tape tape;
          const NetworkOutput out = model_.forward(tape, s.image);
          const LossParts parts =
              compute_losses(tape, out, s.targets, s.frame.intrinsics, data_.target_config.dims, cfg_.loss);
          const Tensor total = total_loss(tape, parts, cfg_.loss, st.losses);
          sums[0] += parts.keypoint.item();
          sums[1] += parts.reg2d.item();
          sums[2] += parts.reg3d.item();
          sums[3] += parts.depth_hint.item();
          ++evaluated;
          if (tape.empty()) continue;
          backward(ops::scale(tape, total, inv_b), tape);
        }
        adam_update(st, lr);
      }
    }
  } catch (const DivergenceError& e) {
    load_state_map(last_good_);
    stage_checksum_.reset();
    for (auto& [name, p] : model_.parameters()) p.set_requires_grad(true);
    std::string where;
    if (!checkpoint_path_.empty()) {
      save_checkpoint(checkpoint_path_, last_good_);
      where = "; last good state written to " + checkpoint_path_.string();
    }
    throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + where);
  }

  EpochLog row;
  row.epoch = epoch;
  row.stage = stage;
  row.lr = lr;
  const double inv = 1.0 / static_cast<double>(evaluated);
  row.keypoint = sums[0] * inv;
  row.reg2d = sums[1] * inv;
  row.reg3d = sums[2] * inv;
  row.depth_hint = sums[3] * inv;
  row.total = row.keypoint + cfg_.loss.lambda1 * row.reg2d + cfg_.loss.lambda2 * row.reg3d +
              cfg_.loss.lambda3 * row.depth_hint;
  epoch_ = epoch;
  history_.push_back(row);
  if (current_stage() != stage) end_stage(stage);
  last_good_ = state_map();
  if (!checkpoint_path_.empty()) save_checkpoint(checkpoint_path_, last_good_);
  return row;
}

std::vector<EpochLog> Trainer::run(const std::function<void(const EpochLog&)>& on_epoch) {
  std::vector<EpochLog> rows;
  while (!finished()) {
    rows.push_back(run_epoch());
    if (on_epoch) on_epoch(rows.back());
  }
  return rows;
}

TensorMap Trainer::state_map() const {
  TensorMap map;
  for (const auto& [name, t] : model_.parameters()) {
    map["param." + name] = t.clone();
    map["adam.m." + name] = Tensor(Shape{t.numel()}, m_.at(name));
    map["adam.v." + name] = Tensor(Shape{t.numel()}, v_.at(name));
  }
  map["trainer.counters"] = Tensor(Shape{2}, std::vector<double>{static_cast<double>(epoch_),
                                                                  static_cast<double>(step_)});
  return map;
}

void Trainer::load_state_map(const TensorMap& map) {
  TensorMap params;
  for (const auto& [name, t] : map) {
    if (has_prefix(name, "param.")) params[name.substr(6)] = t;
  }
  model_.load_parameters(params);
  for (auto& [name, m] : m_) {
    if (const auto it = map.find("adam.m." + name); it != map.end()) {
      const auto vals = it->second.values();
      m.assign(vals.begin(), vals.end());
    }
    if (const auto it = map.find("adam.v." + name); it != map.end()) {
      const auto vals = it->second.values();
      v_[name].assign(vals.begin(), vals.end());
    }
  }
  if (const auto it = map.find("trainer.counters"); it != map.end()) {
    epoch_ = static_cast<int>(it->second.values()[0]);
    step_ = static_cast<std::uint64_t>(it->second.values()[1]);
  }
}

void Trainer::save_state(const std::filesystem::path& path) const { save_checkpoint(path, state_map()); }

void Trainer::load_state(const std::filesystem::path& path) {
  const TensorMap map = load_checkpoint(path);
  for (const auto& [name, t] : model_.parameters()) {
    for (const char* kind : {"param.", "adam.m.", "adam.v."}) {
      if (!map.count(kind + name)) throw ParseError("trainer state " + path.string() + " lacks " + kind + name);
    }
  }
  if (!map.count("trainer.counters")) throw ParseError("trainer state " + path.string() + " lacks counters");
  load_state_map(map);
  if (epoch_ > cfg_.schedule.total_epochs()) throw ParameterError("trainer state is beyond the schedule");
  stage_checksum_.reset();
  last_good_ = state_map();
}

}  // namespace fadnet
