#pragma once

#include "seqpatch/cli/run_config.hpp"
#include "seqpatch/nd/checkpoint.hpp"
#include "seqpatch/training/trainer.hpp"

#include <filesystem>
#include <iosfwd>

namespace seqpatch {

/// Root for run directories: $SEQPATCH_RUN_ROOT, else "./runs".
std::filesystem::path run_root();

/// Creates "<root>/<config hash>-<UTC timestamp>" (suffixed if it already exists).
std::filesystem::path make_run_dir(const RunConfig& config);

/// HR images (*.pgm, sorted by name) paired with their degraded LR inputs.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, const RunConfig& config);

/// Adds every config key as "config.<key>" metadata.
void attach_config(Checkpoint& ckpt, const RunConfig& config);
RunConfig config_from_checkpoint(const Checkpoint& ckpt);

/// CSV "epoch,mean_reward,baseline_b,val_psnr,val_ssim,coverage_mean".
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochStats& s);

/// Per-image rows followed by a "mean" row.
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);

struct AblationRow {
  std::string name;
  double learned = 0.0;
  std::vector<double> baselines;  // one per kind, same order as the header
  double bicubic = 0.0;
};
void write_ablation_csv(std::ostream& out, const std::vector<std::string>& kinds, const std::vector<AblationRow>& rows);

/// Entry point shared by the seqpatch binary and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace seqpatch
