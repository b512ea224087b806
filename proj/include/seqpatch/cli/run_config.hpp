#pragma once

#include "seqpatch/policy/geometry.hpp"
#include "seqpatch/training/config.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seqpatch {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs: geometry, optimization, data and numeric mode.
struct RunConfig {
  PolicyGeometry geometry;
  TrainConfig train;
  int factor = 4;
  std::string train_dir;
  std::string val_dir;
  /// Share of train_dir held out for validation when val_dir is empty.
  double val_fraction = 0.2;
  /// Checkpoint every N epochs (the last epoch is always written).
  long checkpoint_every = 5;
  /// "f32" or "f64".
  std::string precision = "f32";

  /// "desk" (64x64, Z=32, T=6) or "paper" (160x120, Z=60, T=18).
  static RunConfig preset(const std::string& name);

  /// Sets one key from its text form; throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// One "key = value" line per key in a fixed order, normalized values.
  std::string canonical() const;
  /// FNV-1a of the canonical text.
  std::uint64_t hash() const;

  void validate() const;
};

/// Applies "key = value" lines (# comments, blank lines) on top of `base`.
RunConfig parse_config_text(std::string_view text, RunConfig base);

}  // namespace seqpatch
