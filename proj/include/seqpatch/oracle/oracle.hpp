#pragma once

#include "seqpatch/episode/episode.hpp"
#include "seqpatch/training/config.hpp"

#include <functional>
#include <memory>
#include <ostream>

namespace seqpatch {

class OracleSizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Small enough MDP to enumerate every action sequence. Transitions use the
/// ground-truth paste enhancer, so the terminal reward is a function of the actions.
struct TinyMdp {
  PolicyGeometry geometry;
  ImagePlane hr, lr, reference;
  Index steps = 2;
  double coverage_weight = 1.0;
  /// Overrides the terminal reward when set.
  std::function<double(const ImagePlane& final_image, const CoverageMask& coverage)> reward;

  double reward_of(const ImagePlane& final_image, const CoverageMask& coverage) const;
};

/// 16x16 image, 4x4 position grid, one ratio, one scale, T = 2: 240 sequences.
TinyMdp make_tiny_mdp(std::uint64_t seed);
std::unique_ptr<PolicyNetwork<double>> make_tiny_policy(const TinyMdp& mdp, std::uint64_t seed);

inline constexpr std::size_t kMaxEnumeratedSequences = 10000;

struct ExactGradient {
  Gradients<double> gradient;
  double probability_sum = 0.0;
  double expected_reward = 0.0;
  std::size_t sequences = 0;
};

/// grad E[(r - b) sum_t log pi(a_t|s_t)] by summation over every sequence
/// without repeated actions.
ExactGradient exact_policy_gradient(const PolicyNetwork<double>& policy, const TinyMdp& mdp, double baseline);

struct MonteCarloGradient {
  Gradients<double> gradient;
  double mean_reward = 0.0;
  std::size_t episodes = 0;
};

/// REINFORCE estimate (1/N) sum_e (r_e - b) grad sum_t log pi over sampled
/// episodes. The EMA baseline is updated once per `batch` episodes, as in training.
MonteCarloGradient monte_carlo_policy_gradient(const PolicyNetwork<double>& policy, const TinyMdp& mdp,
                                               std::size_t episodes, std::uint64_t seed,
                                               BaselineMode baseline = BaselineMode::ema, std::size_t batch = 16);

/// ||a - reference|| / ||reference|| over all parameters.
double relative_l2(const Gradients<double>& a, const Gradients<double>& reference);

/// Softmax bandit: one logit and one deterministic reward per arm.
struct Bandit {
  Vector<double> logits;
  Vector<double> rewards;
};

/// sum_a pi(a) (r_a - b) grad log pi(a) with respect to the logits.
Vector<double> exact_bandit_gradient(const Bandit& bandit, double baseline);

struct BanditEstimate {
  Vector<double> mean;
  /// Mean squared distance of the per-episode gradients from their mean.
  double variance = 0.0;
};

/// Per-episode REINFORCE gradients through the tape, with b from `mode`
/// (EMA refreshed every `batch` episodes) or a constant when mode is zero.
BanditEstimate bandit_reinforce(const Bandit& bandit, BaselineMode mode, std::size_t episodes, std::uint64_t seed,
                                std::size_t batch = 16);

inline constexpr std::size_t kMaxCoverageSequences = 1000000;

struct CoverageSearch {
  double fraction = 0.0;
  std::vector<std::size_t> sequence;  // indices into the box set
};

/// Exhaustive maximum of the coverage fraction over all |boxes|^T sequences.
CoverageSearch optimal_coverage_bruteforce(Index image_h, Index image_w, const std::vector<Box>& boxes, Index steps);

/// Picks the box adding the most uncovered pixels at each step (first index on ties).
CoverageSearch greedy_coverage(Index image_h, Index image_w, const std::vector<Box>& boxes, Index steps);

struct VerifyCheck {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool passed = false;
  /// Self-test of the harness: the check is supposed to fail.
  bool expected_failure = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t mc_episodes = 200000;
};

std::vector<VerifyCheck> run_verification(const VerifyOptions& options,
                                          const std::function<void(const VerifyCheck&)>& on_check = {});

/// True when every regular check passed and every canary failed.
bool verification_passed(const std::vector<VerifyCheck>& checks);

/// CSV "check,measured,threshold,status,detail".
void write_verify_report(std::ostream& out, const std::vector<VerifyCheck>& checks);

}  // namespace seqpatch
