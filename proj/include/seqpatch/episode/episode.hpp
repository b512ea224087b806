#pragma once

#include "seqpatch/enhancer/network.hpp"
#include "seqpatch/episode/coverage.hpp"
#include "seqpatch/episode/reward.hpp"
#include "seqpatch/policy/network.hpp"

#include <optional>
#include <ostream>
#include <string>

namespace seqpatch {

/// Where actions come from.
enum class ActionSource { sample, greedy, random, raster, fixed_box };

ActionSource parse_action_source(const std::string& name);
std::string to_string(ActionSource source);

/// Raster tile t (cycling): Z x Z boxes left to right, top to bottom.
Action raster_action(const PolicyGeometry& g, Index t);

/// Ids of the 1:1 ratio and the 1.0 scale; throws if the tables lack them.
std::pair<Index, Index> unit_box_ids(const PolicyGeometry& g);

struct StepRecord {
  Vector<double> state;
  Action action;
  Box box;
  double log_prob = 0.0;
  double step_loss = 0.0;
  double coverage = 0.0;  // fraction after this step
};

struct EpisodeTrajectory {
  std::vector<StepRecord> steps;
  ImagePlane initial;
  ImagePlane final_image;
  CoverageMask coverage;
  std::optional<double> reward;  // emitted once, at the terminal step

  /// r_t for t = 1..T: zero except the last entry.
  std::vector<double> rewards() const {
    std::vector<double> r(steps.size(), 0.0);
    if (reward && !r.empty()) r.back() = *reward;
    return r;
  }
};

template <typename Scalar>
struct EpisodeSetup {
  const PolicyNetwork<Scalar>& policy;
  const LocalEnhancer<Scalar>& enhancer;
  ActionSource source = ActionSource::sample;
  Index steps = 6;
};

/// One restoration episode advanced a step at a time, so a batch of episodes can
/// be run in lockstep with an enhancer update between steps.
template <typename Scalar>
class Episode {
 public:
  /// `truth` enables supervised losses; `policy_sink` enables the REINFORCE
  /// backward pass over sampled actions.
  Episode(const EpisodeSetup<Scalar>& setup, const ImagePlane& lr, const ImagePlane* truth, std::uint64_t seed,
          Gradients<Scalar>* policy_sink = nullptr)
      : setup_(setup),
        truth_(truth),
        rng_(seed),
        current_(initial_estimate(lr, setup.policy.geometry().image_h, setup.policy.geometry().image_w)),
        rollout_(setup.policy, current_, policy_sink),
        scoring_(policy_sink != nullptr && setup.source == ActionSource::sample) {
    if (setup.steps < 1) throw std::invalid_argument("episode needs at least one step");
    const auto& g = setup.policy.geometry();
    const Index distinct = setup.source == ActionSource::fixed_box ? g.grid_x() * g.grid_y() : g.action_count();
    if (setup.source != ActionSource::raster && setup.steps > distinct)
      throw std::invalid_argument("T = " + std::to_string(setup.steps) + " exceeds the " + std::to_string(distinct) +
                                  " distinct actions available");
    if (truth && (truth->rows() != g.image_h || truth->cols() != g.image_w))
      throw DimensionError("ground truth is " + extent_string(*truth) + ", target extent is " +
                           std::to_string(g.image_h) + "x" + std::to_string(g.image_w));
    traj_.initial = current_;
    traj_.coverage = CoverageMask(g.image_h, g.image_w);
  }

  bool done() const { return static_cast<Index>(traj_.steps.size()) >= setup_.steps; }
  Index t() const { return static_cast<Index>(traj_.steps.size()); }
  const ImagePlane& current() const { return current_; }

  /// state -> action -> crop -> assemble -> enhance -> paste -> coverage.
  const StepRecord& step(Gradients<Scalar>* enhancer_sink = nullptr) {
    if (done()) throw std::logic_error("episode already finished");
    const auto& g = setup_.policy.geometry();
    const ActionDistribution<Scalar>& dist = rollout_.observe(current_);
    StepRecord rec;
    rec.state = rollout_.state().data.template cast<double>();
    rec.action = choose(dist, rec.log_prob);
    const double lp = rollout_.commit(rec.action, scoring_);
    if (setup_.source != ActionSource::random && setup_.source != ActionSource::raster) rec.log_prob = lp;
    rec.box = action_box(rec.action, g.image_h, g.image_w);
    PatchResult out = setup_.enhancer.enhance({current_, traj_.initial, truth_, rec.box, rollout_.state()}, enhancer_sink);
    current_ = std::move(out.next);
    rec.step_loss = out.loss;
    traj_.coverage.cover(rec.box);
    rec.coverage = traj_.coverage.fraction();
    traj_.steps.push_back(std::move(rec));
    if (done()) traj_.final_image = current_;
    return traj_.steps.back();
  }

  /// Sets the terminal reward; only valid once the last step is taken.
  void finish(double reward) {
    if (!done()) throw std::logic_error("reward requested before the terminal step");
    traj_.reward = reward;
  }

  /// seed * d(sum_t log pi(a_t|s_t))/d(theta) into the policy sink.
  void backward_policy(Scalar seed) {
    if (!traj_.reward) throw std::logic_error("REINFORCE update needs a terminal trajectory");
    rollout_.backward(seed);
  }

  const EpisodeTrajectory& trajectory() const { return traj_; }
  EpisodeTrajectory take_trajectory() { return std::move(traj_); }

 private:
  Action choose(const ActionDistribution<Scalar>& dist, double& log_prob) {
    const auto& g = setup_.policy.geometry();
    auto from_ids = [&](const ActionIds& a) { return make_action(g, a[0], a[1], a[2], a[3]); };
    switch (setup_.source) {
      case ActionSource::sample:
        return from_ids(dist.sample(rng_));
      case ActionSource::greedy:
        return from_ids(dist.greedy());
      case ActionSource::random: {
        const Index n = dist.unmasked_count();
        Index pick = std::min<Index>(n - 1, static_cast<Index>(uniform01(rng_) * static_cast<double>(n)));
        ActionIds chosen{};
        dist.for_each_unmasked([&](const ActionIds& a, double) {
          if (pick-- == 0) chosen = a;
        });
        log_prob = -std::log(static_cast<double>(n));
        return from_ids(chosen);
      }
      case ActionSource::raster:
        log_prob = 0.0;
        return raster_action(g, t());
      case ActionSource::fixed_box: {
        const auto [ratio_id, scale_id] = unit_box_ids(g);
        ActionIds best{-1, -1, ratio_id, scale_id};
        double best_p = -1.0;
        for (Index x = 0; x < g.grid_x(); ++x)
          for (Index y = 0; y < g.grid_y(); ++y) {
            const ActionIds a{x, y, ratio_id, scale_id};
            if (dist.is_masked(a)) continue;
            const double p = dist.head(0)[x] * dist.head(1)[y];
            if (p > best_p) {
              best_p = p;
              best = a;
            }
          }
        if (best[0] < 0) throw MaskedActionError("fixed_box: every position has been taken");
        return from_ids(best);
      }
    }
    throw std::logic_error("unknown action source");
  }

  EpisodeSetup<Scalar> setup_;
  const ImagePlane* truth_;
  Rng rng_;
  ImagePlane current_;
  PolicyRollout<Scalar> rollout_;
  bool scoring_;
  EpisodeTrajectory traj_;
};

/// Runs all T steps; with ground truth and a reference image, also sets the reward.
template <typename Scalar>
EpisodeTrajectory run_episode(const EpisodeSetup<Scalar>& setup, const ImagePlane& lr, const ImagePlane* truth,
                              std::uint64_t seed, const ImagePlane* reference = nullptr, double coverage_weight = 1.0) {
  Episode<Scalar> ep(setup, lr, truth, seed);
  while (!ep.done()) ep.step();
  if (truth && reference)
    ep.finish(compute_reward(ep.trajectory().final_image, *truth, *reference, ep.trajectory().coverage, coverage_weight));
  return ep.take_trajectory();
}

/// Per-step rows "t,x,y,ratio_id,scale_id,Lh,Lw,logprob,step_loss", then a
/// "reward,psnr,ssim,coverage" header and its row.
void write_trajectory_csv(std::ostream& out, const EpisodeTrajectory& traj, double reward, double psnr_db,
                          double ssim_value);

}  // namespace seqpatch
