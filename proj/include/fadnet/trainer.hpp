#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fadnet/dataset.hpp"
#include "fadnet/losses.hpp"
#include "fadnet/model.hpp"

namespace fadnet {

struct Stage {
  std::string name;
  int epochs = 1;
  double lr = 2e-4;
  int lr_halving_period = 0;  // epochs; 0 keeps the rate constant
  std::vector<std::string> frozen;  // parameter-name prefixes
  LossMask losses;
  double weight_decay = 0.0;
};

struct StageSchedule {
  std::vector<Stage> stages;

  /// Throws ParameterError for an empty schedule, non-positive epochs or
  /// rates, or a frozen prefix that matches no parameter of `model`.
  void validate(const FadNet& model) const;
  int total_epochs() const;

  /// Three stages, 9/3/3 epochs at 2e-4, 3e-5, 3e-5, halving every 3 epochs.
  /// Stage 2 freezes the depth-hint module and drops its loss; stage 3 also
  /// freezes the keypoint and 2D heads, drops their losses and adds weight
  /// decay 1e-5. Depth-hint entries are omitted for models without it.
  static StageSchedule desk(const ModelConfig& model);
  /// Same structure at 90/30/30 epochs, halving every 30.
  static StageSchedule full_scale(const ModelConfig& model);
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  StageSchedule schedule;
  LossConfig loss;
  AdamConfig adam;
  std::size_t batch_size = 2;
  /// Passes over the data per logged epoch (desk-scale step multiplier).
  std::size_t passes_per_epoch = 1;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;  // 1-based, global across stages
  std::size_t stage = 0;
  double lr = 0.0;
  double keypoint = 0.0;
  double reg2d = 0.0;  // includes the depth-aware factor
  double reg3d = 0.0;
  double depth_hint = 0.0;
  /// keypoint + l1 * reg2d + l2 * reg3d + l3 * depth_hint over all four
  /// terms, whether or not the stage optimizes them.
  double total = 0.0;
};

std::string format_log_header();
std::string format_log_row(const EpochLog& row);

/// Order-sensitive FNV-1a digest over the bytes of every parameter whose
/// name starts with one of `prefixes` (all parameters when empty).
std::uint64_t parameter_checksum(const TensorMap& params, const std::vector<std::string>& prefixes = {});

class Trainer {
 public:
  Trainer(FadNet& model, const Dataset& data, TrainConfig cfg);

  /// Runs the next epoch of the schedule. Throws DivergenceError on a
  /// non-finite loss after restoring the parameters of the last completed
  /// epoch (and writing them to the checkpoint path, when one is set).
  EpochLog run_epoch();
  /// Runs every remaining epoch; `on_epoch` sees each log row.
  std::vector<EpochLog> run(const std::function<void(const EpochLog&)>& on_epoch = {});
  bool finished() const;

  /// Parameters, optimizer moments and counters.
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);
  void set_checkpoint_path(std::filesystem::path path) { checkpoint_path_ = std::move(path); }

  int epoch() const { return epoch_; }
  std::uint64_t step() const { return step_; }
  /// Stage index the next epoch belongs to.
  std::size_t current_stage() const;
  /// Learning rate for a 1-based global epoch.
  double learning_rate(int epoch) const;
  const std::vector<EpochLog>& history() const { return history_; }
  /// Checksums of the frozen groups taken at each stage boundary: stage,
  /// checksum before, checksum after.
  struct FrozenCheck {
    std::size_t stage;
    std::uint64_t before;
    std::uint64_t after;
  };
  const std::vector<FrozenCheck>& frozen_checks() const { return frozen_checks_; }

  /// Loss parts of one sample without recording gradients.
  LossParts evaluate(const Sample& s) const;

 private:
  void begin_stage(std::size_t stage);
  void end_stage(std::size_t stage);
  std::uint64_t frozen_checksum(const Stage& stage) const;
  bool is_frozen(const std::string& name, const Stage& stage) const;
  void adam_update(const Stage& stage, double lr);
  TensorMap state_map() const;
  void load_state_map(const TensorMap& map);

  FadNet& model_;
  const Dataset& data_;
  TrainConfig cfg_;
  std::map<std::string, std::vector<double>> m_, v_;
  int epoch_ = 0;
  std::uint64_t step_ = 0;
  std::vector<EpochLog> history_;
  std::vector<FrozenCheck> frozen_checks_;
  std::optional<std::uint64_t> stage_checksum_;
  std::filesystem::path checkpoint_path_;
  TensorMap last_good_;
};

}  // namespace fadnet
