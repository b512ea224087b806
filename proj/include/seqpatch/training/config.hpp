#pragma once

#include <cstdint>
#include <string>

namespace seqpatch {

enum class BaselineMode { ema, zero };

struct TrainConfig {
  long steps = 18;  // T
  double learning_rate = 3e-4;
  /// Policy step size; 0 means steps * learning_rate.
  double policy_learning_rate = 0.0;
  double weight_decay = 1e-7;
  double beta1 = 0.5;
  double beta2 = 0.999;
  long batch = 16;
  double coverage_weight = 1.0;  // lambda
  double reward_scale = 1.0;     // a
  BaselineMode baseline = BaselineMode::ema;
  double baseline_decay = 0.9;
  std::uint64_t seed = 0;
  long epochs = 20;
  long workers = 1;
  /// "bicubic" or "single_pass".
  std::string reference = "bicubic";
  long reference_epochs = 2;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  double effective_policy_learning_rate() const {
    return policy_learning_rate > 0 ? policy_learning_rate : static_cast<double>(steps) * learning_rate;
  }
};

BaselineMode parse_baseline_mode(const std::string& name);
std::string to_string(BaselineMode mode);

/// Exponential moving average of terminal rewards, seeded with the first batch mean.
class RewardBaseline {
 public:
  RewardBaseline() = default;
  RewardBaseline(BaselineMode mode, double decay) : mode_(mode), decay_(decay) {}

  /// b used for a batch with mean reward `batch_mean`.
  double value_for(double batch_mean) {
    if (mode_ == BaselineMode::zero) return 0.0;
    if (!initialized_) {
      value_ = batch_mean;
      initialized_ = true;
    }
    return value_;
  }

  void update(double batch_mean) {
    if (mode_ == BaselineMode::zero) return;
    if (!initialized_) {
      value_ = batch_mean;
      initialized_ = true;
      return;
    }
    value_ = decay_ * value_ + (1.0 - decay_) * batch_mean;
  }

  double value() const { return mode_ == BaselineMode::zero ? 0.0 : value_; }
  bool initialized() const { return initialized_; }
  void restore(double value, bool initialized) {
    value_ = value;
    initialized_ = initialized;
  }

 private:
  BaselineMode mode_ = BaselineMode::ema;
  double decay_ = 0.9;
  double value_ = 0.0;
  bool initialized_ = false;
};

}  // namespace seqpatch
