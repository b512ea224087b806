#pragma once

#include "seqpatch/episode/episode.hpp"
#include "seqpatch/imaging/metrics.hpp"
#include "seqpatch/nd/adam.hpp"
#include "seqpatch/nd/checkpoint.hpp"
#include "seqpatch/training/config.hpp"
#include "seqpatch/training/parallel.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>

namespace seqpatch {

/// One (LR, HR) training or evaluation pair.
struct Sample {
  std::string name;
  ImagePlane hr;
  ImagePlane lr;
};

inline AdamConfig adam_config(const TrainConfig& c) {
  AdamConfig a;
  a.learning_rate = c.learning_rate;
  a.weight_decay = c.weight_decay;
  a.beta1 = c.beta1;
  a.beta2 = c.beta2;
  return a;
}

/// The policy takes one step per batch while the enhancer takes one per time step.
inline AdamConfig policy_adam_config(const TrainConfig& c) {
  AdamConfig a = adam_config(c);
  a.learning_rate = c.effective_policy_learning_rate();
  return a;
}

/// Sums scale * parts[i] in index order, then takes one ADAM step.
template <typename Scalar>
void merged_adam_step(ParameterSet<Scalar>& params, OptimizerState<Scalar>& opt,
                      const std::vector<Gradients<Scalar>>& parts, Scalar scale) {
  Gradients<Scalar> total(params);
  for (const auto& g : parts) total.add_scaled(g, scale);
  adam_step(params, total, opt);
}

/// One supervised update of the enhancer on a single patch: loss = masked MSE of
/// the pre-clip restored patch against the ground truth. Returns the loss.
template <typename Scalar>
double supervised_step(EnhancerNetwork<Scalar>& net, OptimizerState<Scalar>& opt, const PatchContext<Scalar>& ctx) {
  if (!ctx.truth) throw std::invalid_argument("supervised_step needs the ground-truth patch");
  Gradients<Scalar> grads(net.params);
  const PatchResult r = LearnedEnhancer<Scalar>(net).enhance(ctx, &grads);
  adam_step(net.params, grads, opt);
  return r.loss;
}

/// REINFORCE over terminal episodes whose rollouts write into `sinks`:
///   grad = -(a / B) sum_e (r_e - b) d(sum_t log pi)/d(theta), then one ADAM step.
template <typename Scalar>
void reinforce_update(ParameterSet<Scalar>& policy_params, OptimizerState<Scalar>& opt,
                      const std::vector<Episode<Scalar>*>& episodes, std::vector<Gradients<Scalar>>& sinks,
                      double reward_scale, double baseline, std::size_t workers = 1) {
  if (episodes.size() != sinks.size()) throw std::invalid_argument("reinforce_update: one sink per episode");
  for (const auto* ep : episodes)
    if (!ep->trajectory().reward) throw std::logic_error("REINFORCE update needs terminal trajectories");
  const double batch = static_cast<double>(episodes.size());
  parallel_for(episodes.size(), workers, [&](std::size_t e) {
    sinks[e].set_zero();
    const double r = *episodes[e]->trajectory().reward;
    episodes[e]->backward_policy(static_cast<Scalar>(-reward_scale * (r - baseline) / batch));
  });
  merged_adam_step(policy_params, opt, sinks, Scalar(1));
}

struct EvalRow {
  std::string name;
  double psnr = 0, ssim = 0;
  double bicubic_psnr = 0, bicubic_ssim = 0;
  double reference_psnr = 0;
  double coverage = 0;
  double reward = 0;
};

struct EpochStats {
  long epoch = 0;  // 1-based
  double mean_reward = 0;
  double baseline = 0;
  double val_psnr = 0;
  double val_ssim = 0;
  double coverage_mean = 0;
  double step_loss_mean = 0;
};

struct BatchStats {
  double mean_reward = 0;
  double baseline_used = 0;
  double coverage_mean = 0;
  double step_loss_mean = 0;
  std::size_t episodes = 0;
};

/// Joint trainer: per-step enhancer updates and a terminal REINFORCE update per batch.
template <typename Scalar>
class Trainer {
  TrainConfig config_;

 public:
  Trainer(PolicyGeometry geometry, TrainConfig config)
      : config_(std::move(config)),
        policy(geometry),
        enhancer(enhancer_config(geometry)),
        policy_opt(policy.params, policy_adam_config(config_)),
        enhancer_opt(enhancer.params, adam_config(config_)),
        baseline_(config_.baseline, config_.baseline_decay) {
    config_.validate();
    Rng policy_rng(derive_seed(config_.seed, 1)), enhancer_rng(derive_seed(config_.seed, 2));
    policy.init(policy_rng);
    enhancer.init(enhancer_rng, true);
    if (config_.reference == "single_pass") {
      reference_net_ = std::make_unique<EnhancerNetwork<Scalar>>(enhancer_config(geometry));
      Rng ref_rng(derive_seed(config_.seed, 3));
      reference_net_->init(ref_rng, true);
      reference_opt_ = OptimizerState<Scalar>(reference_net_->params, adam_config(config_));
      reference_ = std::make_unique<SinglePassReference<Scalar>>(*reference_net_);
    } else {
      reference_ = std::make_unique<BicubicReference>();
    }
  }

  static EnhancerConfig enhancer_config(const PolicyGeometry& g) {
    EnhancerConfig c;
    c.target_h = g.image_h;
    c.target_w = g.image_w;
    c.state_dim = g.state_dim();
    c.leaky_slope = g.leaky_slope;
    return c;
  }

  const TrainConfig& config() const { return config_; }
  const PolicyGeometry& geometry() const { return policy.geometry(); }
  const ReferenceRestorer& reference() const { return *reference_; }
  double baseline() const { return baseline_.value(); }
  long epochs_done() const { return epochs_done_; }
  long batches_done() const { return batches_done_; }
  long policy_updates() const { return policy_opt.step; }
  long enhancer_updates() const { return enhancer_opt.step; }

  /// Fits the single-pass reference (full-image box, zero state) if configured and
  /// not done yet. Uses the same batch order rule as policy training.
  void prepare_reference(const std::vector<Sample>& data) {
    if (!reference_net_ || reference_ready_) return;
    const auto& g = geometry();
    const Tensor<Scalar> state({g.state_dim()});
    for (long epoch = 0; epoch < config_.reference_epochs; ++epoch) {
      const auto order = shuffled(data.size(), derive_seed(config_.seed, 0x5EF, static_cast<std::uint64_t>(epoch)));
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.batch)) {
        const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(config_.batch));
        std::vector<Gradients<Scalar>> sinks(n, Gradients<Scalar>(reference_net_->params));
        parallel_for(n, workers(), [&](std::size_t e) {
          const Sample& s = data[order[start + e]];
          const ImagePlane i0 = initial_estimate(s.lr, g.image_h, g.image_w);
          LearnedEnhancer<Scalar>(*reference_net_).enhance({i0, i0, &s.hr, Box{0, 0, g.image_h, g.image_w}, state}, &sinks[e]);
        });
        merged_adam_step(reference_net_->params, reference_opt_, sinks, Scalar(1) / static_cast<Scalar>(n));
      }
    }
    reference_ready_ = true;
  }

  /// Trains on the given batch (indices into `data`) for one T-step lockstep rollout.
  BatchStats train_batch(const std::vector<Sample>& data, const std::vector<std::size_t>& indices, long epoch,
                         long batch_index) {
    const std::size_t n = indices.size();
    if (n == 0) throw std::invalid_argument("empty batch");
    const LearnedEnhancer<Scalar> learned(enhancer);
    const EpisodeSetup<Scalar> setup{policy, learned, ActionSource::sample, config_.steps};
    std::vector<Gradients<Scalar>> policy_sinks(n, Gradients<Scalar>(policy.params));
    std::vector<Gradients<Scalar>> enhancer_sinks(n, Gradients<Scalar>(enhancer.params));
    std::vector<std::unique_ptr<Episode<Scalar>>> episodes(n);
    parallel_for(n, workers(), [&](std::size_t e) {
      const Sample& s = data[indices[e]];
      episodes[e] = std::make_unique<Episode<Scalar>>(
          setup, s.lr, &s.hr,
          derive_seed(config_.seed, static_cast<std::uint64_t>(epoch) + 1, static_cast<std::uint64_t>(batch_index),
                      static_cast<std::uint64_t>(e)),
          &policy_sinks[e]);
    });
    BatchStats stats;
    stats.episodes = n;
    std::vector<double> losses(n);
    for (long t = 0; t < config_.steps; ++t) {
      parallel_for(n, workers(), [&](std::size_t e) {
        enhancer_sinks[e].set_zero();
        losses[e] = episodes[e]->step(&enhancer_sinks[e]).step_loss;
      });
      merged_adam_step(enhancer.params, enhancer_opt, enhancer_sinks, Scalar(1) / static_cast<Scalar>(n));
      for (double l : losses) stats.step_loss_mean += l;
    }
    stats.step_loss_mean /= static_cast<double>(n * static_cast<std::size_t>(config_.steps));

    std::vector<double> rewards(n);
    parallel_for(n, workers(), [&](std::size_t e) {
      const Sample& s = data[indices[e]];
      const EpisodeTrajectory& tr = episodes[e]->trajectory();
      rewards[e] = compute_reward(tr.final_image, s.hr, reference_image(s), tr.coverage, config_.coverage_weight);
      episodes[e]->finish(rewards[e]);
    });
    for (std::size_t e = 0; e < n; ++e) {
      stats.mean_reward += rewards[e];
      stats.coverage_mean += episodes[e]->trajectory().coverage.fraction();
    }
    stats.mean_reward /= static_cast<double>(n);
    stats.coverage_mean /= static_cast<double>(n);

    stats.baseline_used = baseline_.value_for(stats.mean_reward);
    std::vector<Episode<Scalar>*> raw(n);
    for (std::size_t e = 0; e < n; ++e) raw[e] = episodes[e].get();
    reinforce_update(policy.params, policy_opt, raw, policy_sinks, config_.reward_scale, stats.baseline_used,
                     workers());
    baseline_.update(stats.mean_reward);
    return stats;
  }

  /// Runs the remaining batches of the current epoch, then validates.
  /// `after_batch` is called after every batch (e.g. to checkpoint).
  EpochStats train_epoch(const std::vector<Sample>& data, const std::vector<Sample>& validation,
                         const std::function<void(const Trainer&)>& after_batch = {}) {
    if (data.empty()) throw std::invalid_argument("training set is empty");
    prepare_reference(data);
    const long epoch = epochs_done_;
    const auto order = shuffled(data.size(), derive_seed(config_.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
    const std::size_t bs = static_cast<std::size_t>(config_.batch);
    const long batches = static_cast<long>((data.size() + bs - 1) / bs);
    for (long b = batches_done_; b < batches; ++b) {
      const std::size_t start = static_cast<std::size_t>(b) * bs;
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
      const BatchStats s = train_batch(data, idx, epoch, b);
      epoch_reward_ += s.mean_reward * static_cast<double>(s.episodes);
      epoch_coverage_ += s.coverage_mean * static_cast<double>(s.episodes);
      epoch_loss_ += s.step_loss_mean * static_cast<double>(s.episodes);
      epoch_episodes_ += s.episodes;
      batches_done_ = b + 1;
      if (after_batch && batches_done_ < batches) after_batch(*this);
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.mean_reward = epoch_reward_ / static_cast<double>(epoch_episodes_);
    stats.coverage_mean = epoch_coverage_ / static_cast<double>(epoch_episodes_);
    stats.step_loss_mean = epoch_loss_ / static_cast<double>(epoch_episodes_);
    stats.baseline = baseline_.value();
    if (!validation.empty()) {
      const auto rows = evaluate(validation, ActionSource::greedy);
      for (const auto& r : rows) {
        stats.val_psnr += r.psnr;
        stats.val_ssim += r.ssim;
      }
      stats.val_psnr /= static_cast<double>(rows.size());
      stats.val_ssim /= static_cast<double>(rows.size());
    }
    epochs_done_ = epoch + 1;
    batches_done_ = 0;
    epoch_reward_ = epoch_coverage_ = epoch_loss_ = 0.0;
    epoch_episodes_ = 0;
    return stats;
  }

  ImagePlane reference_image(const Sample& s) const {
    return reference_->restore(s.lr, geometry().image_h, geometry().image_w);
  }

  /// One episode per sample with the given action source (no parameter updates).
  std::vector<EvalRow> evaluate(const std::vector<Sample>& data, ActionSource source, std::uint64_t seed = 0) const {
    return evaluate_with(data, source, seed, LearnedEnhancer<Scalar>(enhancer));
  }

  std::vector<EvalRow> evaluate_with(const std::vector<Sample>& data, ActionSource source, std::uint64_t seed,
                                     const LocalEnhancer<Scalar>& enh) const {
    const auto& g = geometry();
    std::vector<EvalRow> rows(data.size());
    const EpisodeSetup<Scalar> setup{policy, enh, source, config_.steps};
    parallel_for(data.size(), workers(), [&](std::size_t i) {
      const Sample& s = data[i];
      check_sample(s);
      const ImagePlane ref = reference_image(s);
      const EpisodeTrajectory tr = run_episode(setup, s.lr, &s.hr, derive_seed(seed, 0xE7A1, i), &ref, config_.coverage_weight);
      const ImagePlane bicubic = initial_estimate(s.lr, g.image_h, g.image_w);
      EvalRow& r = rows[i];
      r.name = s.name;
      r.psnr = psnr(tr.final_image, s.hr);
      r.ssim = ssim(tr.final_image, s.hr);
      r.bicubic_psnr = psnr(bicubic, s.hr);
      r.bicubic_ssim = ssim(bicubic, s.hr);
      r.reference_psnr = psnr(ref, s.hr);
      r.coverage = tr.coverage.fraction();
      r.reward = *tr.reward;
    });
    return rows;
  }

  void check_sample(const Sample& s) const {
    const auto& g = geometry();
    if (s.hr.rows() != g.image_h || s.hr.cols() != g.image_w)
      throw DimensionError("image '" + s.name + "' is " + extent_string(s.hr) + ", configured target is " +
                           std::to_string(g.image_h) + "x" + std::to_string(g.image_w));
  }

  /// Parameters, ADAM moments, counters and baseline.
  Checkpoint save_state() const {
    Checkpoint c;
    c.step = static_cast<std::uint64_t>(policy_opt.step);
    c.seed = config_.seed;
    store_parameters(c, "", policy.params);
    store_parameters(c, "", enhancer.params);
    store_optimizer(c, "adam.policy", policy.params, policy_opt);
    store_optimizer(c, "adam.enhancer", enhancer.params, enhancer_opt);
    if (reference_net_) {
      store_parameters(c, "reference/", reference_net_->params);
      store_optimizer(c, "adam.reference", reference_net_->params, reference_opt_);
      c.set_meta("trainer.reference_ready", reference_ready_ ? "1" : "0");
    }
    c.set_meta("trainer.epochs_done", std::to_string(epochs_done_));
    c.set_meta("trainer.batches_done", std::to_string(batches_done_));
    c.set_meta("trainer.epoch_episodes", std::to_string(epoch_episodes_));
    Vector<double> acc(5);
    acc << baseline_.value(), baseline_.initialized() ? 1.0 : 0.0, epoch_reward_, epoch_coverage_, epoch_loss_;
    c.put<double>("trainer.accumulators", {5}, acc);
    return c;
  }

  void load_state(const Checkpoint& c) {
    restore_parameters(c, "", policy.params);
    restore_parameters(c, "", enhancer.params);
    restore_optimizer(c, "adam.policy", policy.params, policy_opt);
    restore_optimizer(c, "adam.enhancer", enhancer.params, enhancer_opt);
    if (reference_net_) {
      restore_parameters(c, "reference/", reference_net_->params);
      restore_optimizer(c, "adam.reference", reference_net_->params, reference_opt_);
      reference_ready_ = c.meta("trainer.reference_ready").value_or("0") == "1";
    }
    epochs_done_ = std::stol(required_meta(c, "trainer.epochs_done"));
    batches_done_ = std::stol(required_meta(c, "trainer.batches_done"));
    epoch_episodes_ = std::stoul(required_meta(c, "trainer.epoch_episodes"));
    const Tensor<double> acc = c.get<double>("trainer.accumulators");
    if (acc.size() != 5) throw CheckpointError("trainer.accumulators has the wrong size");
    baseline_.restore(acc.data[0], acc.data[1] != 0.0);
    epoch_reward_ = acc.data[2];
    epoch_coverage_ = acc.data[3];
    epoch_loss_ = acc.data[4];
  }

  PolicyNetwork<Scalar> policy;
  EnhancerNetwork<Scalar> enhancer;
  OptimizerState<Scalar> policy_opt;
  OptimizerState<Scalar> enhancer_opt;

 private:
  std::size_t workers() const { return static_cast<std::size_t>(config_.workers); }

  static std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    // Fisher-Yates with the portable uniform01 draw.
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    return order;
  }

  static std::string required_meta(const Checkpoint& c, const std::string& key) {
    auto v = c.meta(key);
    if (!v) throw CheckpointError("checkpoint lacks '" + key + "'");
    return *v;
  }

  static void store_optimizer(Checkpoint& c, const std::string& prefix, const ParameterSet<Scalar>& params,
                              const OptimizerState<Scalar>& opt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.put<Scalar>(prefix + ".m/" + params.name(i), params[i].shape, opt.first_moment[i]);
      c.put<Scalar>(prefix + ".v/" + params.name(i), params[i].shape, opt.second_moment[i]);
    }
    c.set_meta(prefix + ".step", std::to_string(opt.step));
  }

  static void restore_optimizer(const Checkpoint& c, const std::string& prefix, const ParameterSet<Scalar>& params,
                                OptimizerState<Scalar>& opt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<Scalar> m = c.get<Scalar>(prefix + ".m/" + params.name(i));
      Tensor<Scalar> v = c.get<Scalar>(prefix + ".v/" + params.name(i));
      if (m.shape != params[i].shape || v.shape != params[i].shape)
        throw CheckpointError("optimizer state for '" + params.name(i) + "' has the wrong shape");
      opt.first_moment[i] = std::move(m.data);
      opt.second_moment[i] = std::move(v.data);
    }
    opt.step = std::stoll(required_meta(c, prefix + ".step"));
  }

  RewardBaseline baseline_;
  std::unique_ptr<EnhancerNetwork<Scalar>> reference_net_;
  OptimizerState<Scalar> reference_opt_;
  std::unique_ptr<ReferenceRestorer> reference_;
  bool reference_ready_ = false;
  long epochs_done_ = 0;
  long batches_done_ = 0;
  std::size_t epoch_episodes_ = 0;
  double epoch_reward_ = 0.0, epoch_coverage_ = 0.0, epoch_loss_ = 0.0;
};

}  // namespace seqpatch
