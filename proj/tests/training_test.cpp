#include "doctest.h"

#include "seqpatch/imaging/synthetic.hpp"
#include "seqpatch/nd/gradcheck.hpp"
#include "seqpatch/training/trainer.hpp"

#include <cstring>

using namespace seqpatch;

namespace {

PolicyGeometry small_geometry() {
  PolicyGeometry g;
  g.image_h = g.image_w = 32;
  g.box_base = 16;
  g.policy_input = 32;
  g.feature_dim = 8;
  g.history_dim = 8;
  g.hidden_dim = 16;
  return g;
}

TrainConfig small_config(long steps = 3) {
  TrainConfig c;
  c.steps = steps;
  c.seed = 11;
  return c;
}

std::vector<Sample> make_samples(std::size_t n, std::uint64_t seed) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.name = "s" + std::to_string(i);
    s.hr = synthetic_texture(derive_seed(seed, i), 32, 32);
    s.lr = degrade(s.hr, 4);
    out.push_back(std::move(s));
  }
  return out;
}

template <typename Scalar>
bool bitwise_equal(const ParameterSet<Scalar>& a, const ParameterSet<Scalar>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].shape != b[i].shape ||
        std::memcmp(a[i].data.data(), b[i].data.data(), sizeof(Scalar) * static_cast<std::size_t>(a[i].size())) != 0)
      return false;
  return true;
}

// Largest |delta - expected| over all parameters where expected is the decoupled
// weight-decay step of a zero-gradient ADAM update.
double max_non_decay_change(const ParameterSet<double>& before, const ParameterSet<double>& after, double lr,
                            double wd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const Vector<double> expected = before[i].data - lr * wd * before[i].data;
    worst = std::max(worst, (after[i].data - expected).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST_CASE("train config") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  TrainConfig c;
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.reference = "lanczos";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(parse_baseline_mode("ema") == BaselineMode::ema);
  CHECK(to_string(parse_baseline_mode("zero")) == "zero");
  CHECK_THROWS_AS(parse_baseline_mode("mean"), std::invalid_argument);
}

TEST_CASE("reward baseline") {
  RewardBaseline b(BaselineMode::ema, 0.9);
  CHECK(b.value_for(2.0) == 2.0);
  b.update(2.0);
  CHECK(b.value() == 2.0);
  b.update(3.0);
  CHECK(b.value() == doctest::Approx(2.1).epsilon(1e-15));
  RewardBaseline z(BaselineMode::zero, 0.9);
  CHECK(z.value_for(5.0) == 0.0);
  z.update(5.0);
  CHECK(z.value() == 0.0);
}

TEST_CASE("supervised_step") {
  Rng rng(3);
  const PolicyGeometry g = small_geometry();
  EnhancerNetwork<double> net(Trainer<double>::enhancer_config(g));
  const ImagePlane it = synthetic_texture(1, 32, 32);
  const ImagePlane i0 = bicubic_resize(degrade(it, 4), 32, 32);
  Tensor<double> state({g.state_dim()});
  for (Index i = 0; i < state.size(); ++i) state.data[i] = 2 * uniform01(rng) - 1;
  const Box box{4, 6, 13, 17};
  const TrainConfig tc = small_config();

  SUBCASE("prediction equal to the truth: loss 0, weight decay only") {
    net.init(rng, true);
    OptimizerState<double> opt(net.params, adam_config(tc));
    const ParameterSet<double> before = net.params;
    const double loss = supervised_step(net, opt, {it, i0, &it, box, state});
    CHECK(loss == 0.0);
    CHECK(max_non_decay_change(before, net.params, tc.learning_rate, tc.weight_decay) < 1e-18);
    CHECK(opt.step == 1);
  }
  SUBCASE("constant offset 0.1 gives loss 0.01") {
    net.init(rng, true);
    OptimizerState<double> opt(net.params, adam_config(tc));
    ImagePlane gt = it;
    gt.block(box.top, box.left, box.height, box.width).array() += 0.1;
    const double loss = supervised_step(net, opt, {it, i0, &gt, box, state});
    CHECK(loss == doctest::Approx(0.01).epsilon(1e-12));
  }
  SUBCASE("gradient of the reported loss matches finite differences") {
    net.init(rng, false);
    for (auto& e : net.params)
      if (e.name.ends_with(".bias")) fill_uniform(e.tensor, 0.05, rng);
    const ImagePlane gt = synthetic_texture(2, 32, 32);
    const PatchContext<double> ctx{it, i0, &gt, box, state};
    Gradients<double> grads(net.params);
    const double base = LearnedEnhancer<double>(net).enhance(ctx, &grads).loss;
    double worst = 0.0;
    Rng pick(9);
    for (std::size_t p = 0; p < net.params.size(); ++p) {
      for (int k = 0; k < 4; ++k) {
        const Index i = static_cast<Index>(uniform01(pick) * static_cast<double>(net.params[p].size()));
        double& theta = net.params[p].data[i];
        const double saved = theta;
        auto central = [&](double h) {
          theta = saved + h;
          const double up = LearnedEnhancer<double>(net).enhance(ctx, nullptr).loss;
          theta = saved - h;
          const double down = LearnedEnhancer<double>(net).enhance(ctx, nullptr).loss;
          theta = saved;
          return (up - down) / (2 * h);
        };
        const double numeric = detail::cascade_derivative(central, 1e-5, std::abs(base));
        const double analytic = grads[p][i];
        const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        INFO(net.params.name(p) << "[" << i << "] analytic " << analytic << " numeric " << numeric);
        CHECK(err < 1e-4);
        worst = std::max(worst, err);
      }
    }
  }
}

TEST_CASE("reinforce_update") {
  const PolicyGeometry g = small_geometry();
  const TrainConfig tc = small_config(2);
  PolicyNetwork<double> policy(g);
  EnhancerNetwork<double> enhancer(Trainer<double>::enhancer_config(g));
  Rng rng(5);
  policy.init(rng, 0.3);
  enhancer.init(rng, false);
  const OracleEnhancer<double> oracle;
  const EpisodeSetup<double> setup{policy, oracle, ActionSource::sample, tc.steps};
  const auto samples = make_samples(3, 21);

  auto run = [&](std::vector<Gradients<double>>& sinks, std::vector<std::unique_ptr<Episode<double>>>& eps,
                 bool terminal, double reward) {
    for (std::size_t e = 0; e < samples.size(); ++e) {
      eps.push_back(std::make_unique<Episode<double>>(setup, samples[e].lr, &samples[e].hr, 100 + e, &sinks[e]));
      while (!eps.back()->done()) eps.back()->step();
      if (terminal) eps.back()->finish(reward);
    }
  };

  SUBCASE("r == b leaves only weight decay; the enhancer is untouched") {
    std::vector<Gradients<double>> sinks(samples.size(), Gradients<double>(policy.params));
    std::vector<std::unique_ptr<Episode<double>>> eps;
    run(sinks, eps, true, 0.75);
    std::vector<Episode<double>*> raw;
    for (auto& e : eps) raw.push_back(e.get());
    OptimizerState<double> opt(policy.params, adam_config(tc));
    const ParameterSet<double> before = policy.params;
    const std::uint64_t enh_sum = enhancer.params.checksum();
    reinforce_update(policy.params, opt, raw, sinks, 1.0, 0.75);
    for (const auto& s : sinks) CHECK(s.squared_norm() == 0.0);
    CHECK(max_non_decay_change(before, policy.params, tc.learning_rate, tc.weight_decay) < 1e-18);
    CHECK(enhancer.params.checksum() == enh_sum);
  }
  SUBCASE("r != b moves the policy") {
    std::vector<Gradients<double>> sinks(samples.size(), Gradients<double>(policy.params));
    std::vector<std::unique_ptr<Episode<double>>> eps;
    run(sinks, eps, true, 1.0);
    std::vector<Episode<double>*> raw;
    for (auto& e : eps) raw.push_back(e.get());
    OptimizerState<double> opt(policy.params, adam_config(tc));
    const std::uint64_t before = policy.params.checksum();
    reinforce_update(policy.params, opt, raw, sinks, 1.0, 0.0);
    double norm = 0;
    for (const auto& s : sinks) norm += s.squared_norm();
    CHECK(norm > 0);
    CHECK(policy.params.checksum() != before);
  }
  SUBCASE("non-terminal trajectories are rejected") {
    std::vector<Gradients<double>> sinks(samples.size(), Gradients<double>(policy.params));
    std::vector<std::unique_ptr<Episode<double>>> eps;
    run(sinks, eps, false, 0.0);
    std::vector<Episode<double>*> raw;
    for (auto& e : eps) raw.push_back(e.get());
    OptimizerState<double> opt(policy.params, adam_config(tc));
    CHECK_THROWS_AS(reinforce_update(policy.params, opt, raw, sinks, 1.0, 0.0), std::logic_error);
    CHECK(opt.step == 0);
  }
  SUBCASE("supervised steps never touch the policy") {
    const std::uint64_t pol_sum = policy.params.checksum();
    OptimizerState<double> opt(enhancer.params, adam_config(tc));
    Tensor<double> state({g.state_dim()});
    const ImagePlane i0 = bicubic_resize(samples[0].lr, 32, 32);
    supervised_step(enhancer, opt, {i0, i0, &samples[0].hr, Box{0, 0, 16, 16}, state});
    CHECK(policy.params.checksum() == pol_sum);
  }
}

TEST_CASE("trainer") {
  const PolicyGeometry g = small_geometry();
  const auto train = make_samples(20, 31);
  const auto val = make_samples(3, 32);

  SUBCASE("update counts for one epoch") {
    Trainer<double> t(g, small_config(3));
    const EpochStats s = t.train_epoch(train, val);
    CHECK(s.epoch == 1);
    CHECK(t.policy_updates() == 2);
    CHECK(t.enhancer_updates() == 6);
    CHECK(t.epochs_done() == 1);
    CHECK(std::isfinite(s.mean_reward));
    CHECK(s.coverage_mean > 0);
    CHECK(s.coverage_mean <= 1);
    CHECK(s.val_psnr > 0);
  }
  SUBCASE("replay determinism") {
    Trainer<double> a(g, small_config(2)), b(g, small_config(2));
    const EpochStats sa = a.train_epoch(train, val), sb = b.train_epoch(train, val);
    CHECK(sa.mean_reward == sb.mean_reward);
    CHECK(sa.val_psnr == sb.val_psnr);
    CHECK(sa.baseline == sb.baseline);
    CHECK(bitwise_equal(a.policy.params, b.policy.params));
    CHECK(bitwise_equal(a.enhancer.params, b.enhancer.params));
  }
  SUBCASE("different seeds diverge") {
    TrainConfig c = small_config(2);
    Trainer<double> a(g, c);
    c.seed = 12;
    Trainer<double> b(g, c);
    CHECK_FALSE(bitwise_equal(a.policy.params, b.policy.params));
  }
  SUBCASE("resume mid-epoch reproduces the next parameters bitwise") {
    TrainConfig c = small_config(2);
    c.batch = 8;
    Trainer<double> full(g, c);
    std::vector<std::uint8_t> saved;
    full.train_epoch(train, val, [&](const Trainer<double>& t) {
      if (t.batches_done() == 1) saved = t.save_state().serialize();
    });
    const EpochStats next_full = full.train_epoch(train, val);
    REQUIRE(!saved.empty());

    Trainer<double> resumed(g, c);
    resumed.load_state(Checkpoint::deserialize(saved));
    CHECK(resumed.batches_done() == 1);
    resumed.train_epoch(train, val);
    const EpochStats next_resumed = resumed.train_epoch(train, val);
    CHECK(bitwise_equal(full.policy.params, resumed.policy.params));
    CHECK(bitwise_equal(full.enhancer.params, resumed.enhancer.params));
    CHECK(next_full.mean_reward == next_resumed.mean_reward);
    CHECK(next_full.baseline == next_resumed.baseline);
    CHECK(full.policy_updates() == resumed.policy_updates());
  }
  SUBCASE("checkpoint restores across instances and rejects another geometry") {
    Trainer<double> a(g, small_config(2));
    a.train_epoch(train, {});
    const Checkpoint ck = a.save_state();
    TrainConfig other = small_config(2);
    other.seed = 99;
    Trainer<double> b(g, other);
    b.load_state(ck);
    CHECK(bitwise_equal(a.policy.params, b.policy.params));
    CHECK(b.baseline() == a.baseline());
    PolicyGeometry bigger = g;
    bigger.hidden_dim = 24;
    Trainer<double> c(bigger, small_config(2));
    CHECK_THROWS_AS(c.load_state(ck), CheckpointError);
  }
  SUBCASE("single-pass reference is fitted before the first batch") {
    TrainConfig c = small_config(2);
    c.reference = "single_pass";
    c.reference_epochs = 1;
    Trainer<double> t(g, c);
    const ImagePlane before = t.reference_image(train[0]);
    t.train_epoch(train, {});
    const ImagePlane after = t.reference_image(train[0]);
    CHECK((before == bicubic_resize(train[0].lr, 32, 32)).all());
    CHECK_FALSE((after == before).all());
  }
  SUBCASE("empty data and wrong extents") {
    Trainer<double> t(g, small_config(2));
    CHECK_THROWS_AS(t.train_epoch({}, {}), std::invalid_argument);
    std::vector<Sample> bad = make_samples(1, 1);
    bad[0].hr = ImagePlane::Zero(16, 16);
    CHECK_THROWS_AS(t.evaluate(bad, ActionSource::greedy), DimensionError);
  }
}
