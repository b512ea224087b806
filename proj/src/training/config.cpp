#include "seqpatch/training/config.hpp"

#include <stdexcept>

namespace seqpatch {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (steps < 1) fail("steps must be at least 1");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (!(policy_learning_rate >= 0)) fail("policy_learning_rate must be non-negative");
  if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) fail("beta2 must lie in [0, 1)");
  if (batch < 1) fail("batch must be at least 1");
  if (!(coverage_weight >= 0)) fail("coverage_weight must be non-negative");
  if (!(reward_scale > 0)) fail("reward_scale must be positive");
  if (!(baseline_decay >= 0 && baseline_decay < 1)) fail("baseline_decay must lie in [0, 1)");
  if (epochs < 1) fail("epochs must be at least 1");
  if (workers < 1) fail("workers must be at least 1");
  if (reference != "bicubic" && reference != "single_pass") fail("reference must be bicubic or single_pass");
  if (reference_epochs < 0) fail("reference_epochs must be non-negative");
}

BaselineMode parse_baseline_mode(const std::string& name) {
  if (name == "ema") return BaselineMode::ema;
  if (name == "zero") return BaselineMode::zero;
  throw std::invalid_argument("unknown baseline mode '" + name + "' (expected ema or zero)");
}

std::string to_string(BaselineMode mode) { return mode == BaselineMode::ema ? "ema" : "zero"; }

}  // namespace seqpatch
