#include "seqpatch/format.hpp"
#include "seqpatch/imaging/synthetic.hpp"
#include "seqpatch/nd/gradcheck.hpp"
#include "seqpatch/oracle/oracle.hpp"

#include <cmath>

namespace seqpatch {

namespace {

VerifyCheck check_below(std::string name, double measured, double threshold, std::string detail = {}) {
  return {std::move(name), measured, threshold, measured < threshold, false, std::move(detail)};
}

std::string worst_of(const GradCheckResult& r) {
  return r.worst_parameter + "[" + std::to_string(r.worst_index) + "] analytic " + format_double(r.worst_analytic) +
         " numeric " + format_double(r.worst_numeric);
}

GradCheckOptions adaptive(std::size_t coordinates = 0, double analytic_scale = 1.0) {
  GradCheckOptions o;
  o.coordinates_per_tensor = coordinates;
  o.adaptive_step = true;
  o.analytic_scale = analytic_scale;
  return o;
}

// Scalar probe of a tensor-valued op: <weights, op(...)>.
Var<double> probe(const Var<double>& y, const Tensor<double>& weights) {
  return sum(y * y.tape()->constant(weights));
}

Tensor<double> random_tensor(Shape shape, Rng& rng, double bound = 1.0) {
  Tensor<double> t(std::move(shape));
  fill_uniform(t, bound, rng);
  return t;
}

GradCheckResult conv_check(Rng& rng, double analytic_scale) {
  ParameterSet<double> p;
  const auto x = p.add("x", {2, 7, 6});
  const auto k = p.add("kernel", {3, 2, 3, 3});
  fill_uniform(p[x], 1.0, rng);
  fill_uniform(p[k], 1.0, rng);
  const Tensor<double> w = random_tensor({3, 4, 3}, rng);
  return finite_diff_check(
      p, [&](const Binder<double>& b) { return probe(conv2d(b(x), b(k), 2, 1), w); }, adaptive(0, analytic_scale));
}

GradCheckResult deconv_check(Rng& rng) {
  ParameterSet<double> p;
  const auto x = p.add("x", {3, 4, 3});
  const auto k = p.add("kernel", {3, 2, 3, 3});
  fill_uniform(p[x], 1.0, rng);
  fill_uniform(p[k], 1.0, rng);
  const Tensor<double> w = random_tensor({2, 8, 6}, rng);
  return finite_diff_check(
      p, [&](const Binder<double>& b) { return probe(deconv2d(b(x), b(k), 2, 1, 1), w); }, adaptive());
}

GradCheckResult gru_check(Rng& rng) {
  ParameterSet<double> p;
  const GruCell cell = GruCell::add(p, "gru", 3, 4);
  const auto x = p.add("x", {3});
  const auto h = p.add("h", {4});
  for (auto& e : p) fill_uniform(e.tensor, 0.8, rng);
  const Tensor<double> w = random_tensor({4}, rng);
  return finite_diff_check(
      p, [&](const Binder<double>& b) { return probe(cell(b, b(x), b(h)), w); }, adaptive());
}

GradCheckResult log_softmax_check(Rng& rng) {
  ParameterSet<double> p;
  const auto z = p.add("logits", {5});
  fill_uniform(p[z], 2.0, rng);
  const Tensor<double> w = random_tensor({5}, rng);
  return finite_diff_check(
      p, [&](const Binder<double>& b) { return probe(log_softmax(b(z)), w); }, adaptive());
}

GradCheckResult masked_mse_check(Rng& rng) {
  ParameterSet<double> p;
  const auto y = p.add("pred", {1, 6, 7});
  fill_uniform(p[y], 1.0, rng);
  const Tensor<double> target = random_tensor({1, 6, 7}, rng);
  const Box box{1, 2, 4, 3};
  return finite_diff_check(
      p, [&](const Binder<double>& b) { return masked_mse(b(y), target, box); }, adaptive());
}

double conv_adjoint_error(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index c = 1 + static_cast<Index>(uniform01(rng) * 3), o = 1 + static_cast<Index>(uniform01(rng) * 3);
    const Index in = 6 + 2 * static_cast<Index>(uniform01(rng) * 3);
    Tape<double> tape;
    const Tensor<double> x = random_tensor({c, in, in}, rng), kern = random_tensor({o, c, 3, 3}, rng);
    const auto kx = conv2d(tape.constant(x), tape.constant(kern), 2, 1);
    const Tensor<double> y = random_tensor(kx.shape(), rng);
    const auto ky = deconv2d(tape.constant(y), tape.constant(kern), 2, 1, 1);
    const double lhs = kx.value().data.dot(y.data), rhs = x.data.dot(ky.value().data);
    worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
  }
  return worst;
}

GradCheckResult enhancer_check(Rng& rng) {
  EnhancerConfig cfg;
  cfg.target_h = cfg.target_w = 32;
  cfg.state_dim = 12;
  EnhancerNetwork<double> net(cfg);
  net.init(rng, false);
  for (auto& e : net.params)
    if (e.name.ends_with(".bias")) fill_uniform(e.tensor, 0.05, rng);
  const ImagePlane it = synthetic_texture(4, 32, 32);
  const ImagePlane i0 = bicubic_resize(degrade(it, 4), 32, 32);
  const ImagePlane gt = synthetic_texture(5, 32, 32);
  const Tensor<double> state = random_tensor({12}, rng);
  const Box box{6, 4, 17, 21};
  Tensor<double> target({1, 32, 32});
  const ImagePlane diff = gt - it;
  target.data = Eigen::Map<const Vector<double>>(diff.data(), diff.size());
  return finite_diff_check(
      net.params,
      [&](const Binder<double>& bind) {
        Var<double> ctx = net.global_context(bind, bind.tape().constant(state));
        return masked_mse(net.forward(bind, net.stack_input(bind, assemble_planes(box, it, i0), ctx)), target, box);
      },
      adaptive(12));
}

GradCheckResult policy_check(Rng& rng) {
  PolicyGeometry g;
  g.image_h = g.image_w = 16;
  g.grid_stride = 4;
  g.box_base = 4;
  g.ratios = {1.0, 0.5};
  g.scales = {1.0, 1.5};
  g.policy_input = 16;
  g.feature_dim = 6;
  g.history_dim = 5;
  g.hidden_dim = 7;
  PolicyNetwork<double> net(g);
  net.init(rng, 1.0);
  for (auto& e : net.params)
    if (e.name.ends_with(".bias")) fill_uniform(e.tensor, 0.1, rng);
  const ImagePlane i0 = bicubic_resize(degrade(synthetic_texture(7, 16, 16), 4), 16, 16);
  const ImagePlane i1 = synthetic_texture(6, 16, 16);
  const Action first = make_action(g, 1, 2, 1, 0), second = make_action(g, 2, 2, 0, 1);
  return finite_diff_check(
      net.params,
      [&](const Binder<double>& bind) {
        PolicyRollout<double> roll(net, bind, i0);
        roll.observe(i0);
        roll.commit(first, true);
        roll.observe(i1);
        roll.commit(second, true);
        return roll.log_prob_sum();
      },
      adaptive());
}

Box random_box(Index h, Index w, Rng& rng) {
  Box b;
  b.height = 1 + static_cast<Index>(uniform01(rng) * static_cast<double>(h));
  b.width = 1 + static_cast<Index>(uniform01(rng) * static_cast<double>(w));
  b.top = static_cast<Index>(uniform01(rng) * static_cast<double>(h - b.height + 1));
  b.left = static_cast<Index>(uniform01(rng) * static_cast<double>(w - b.width + 1));
  return b;
}

}  // namespace

std::vector<VerifyCheck> run_verification(const VerifyOptions& options,
                                          const std::function<void(const VerifyCheck&)>& on_check) {
  std::vector<VerifyCheck> checks;
  auto add = [&](VerifyCheck c) {
    if (on_check) on_check(c);
    checks.push_back(std::move(c));
  };
  Rng rng(derive_seed(options.seed, 0x7E51));
  constexpr double kGrad = 1e-4;

  {
    const GradCheckResult r = conv_check(rng, 1.0);
    add(check_below("gradcheck.conv2d", r.max_relative_error, kGrad, worst_of(r)));
  }
  {
    const GradCheckResult r = deconv_check(rng);
    add(check_below("gradcheck.deconv2d", r.max_relative_error, kGrad, worst_of(r)));
  }
  {
    const GradCheckResult r = gru_check(rng);
    add(check_below("gradcheck.gru", r.max_relative_error, kGrad, worst_of(r)));
  }
  {
    const GradCheckResult r = log_softmax_check(rng);
    add(check_below("gradcheck.log_softmax", r.max_relative_error, kGrad, worst_of(r)));
  }
  {
    const GradCheckResult r = masked_mse_check(rng);
    add(check_below("gradcheck.masked_mse", r.max_relative_error, kGrad, worst_of(r)));
  }
  add(check_below("adjoint.conv2d_deconv2d", conv_adjoint_error(rng), 1e-12, "50 random shapes"));
  {
    const GradCheckResult r = enhancer_check(rng);
    add(check_below("gradcheck.enhancer_loss", r.max_relative_error, kGrad,
                    std::to_string(r.coordinates) + " coordinates; " + worst_of(r)));
  }
  {
    const GradCheckResult r = policy_check(rng);
    add(check_below("gradcheck.policy_log_prob", r.max_relative_error, kGrad,
                    std::to_string(r.coordinates) + " coordinates; " + worst_of(r)));
  }

  const TinyMdp mdp = make_tiny_mdp(derive_seed(options.seed, 0x3D9));
  const auto policy = make_tiny_policy(mdp, derive_seed(options.seed, 0x3DA));
  const ExactGradient exact = exact_policy_gradient(*policy, mdp, 0.0);
  add(check_below("oracle.probability_sum", std::abs(exact.probability_sum - 1.0), 1e-10,
                  std::to_string(exact.sequences) + " sequences"));
  {
    const ExactGradient shifted = exact_policy_gradient(*policy, mdp, 10.0);
    add(check_below("oracle.baseline_invariance", relative_l2(shifted.gradient, exact.gradient), 1e-10,
                    "b = 0 vs b = 10"));
  }
  {
    TinyMdp constant = mdp;
    constant.reward = [](const ImagePlane&, const CoverageMask&) { return 3.0; };
    const ExactGradient zero = exact_policy_gradient(*policy, constant, 0.0);
    add(check_below("oracle.constant_reward_gradient", std::sqrt(zero.gradient.squared_norm()), 1e-12,
                    "reward 3 for every sequence"));
  }
  {
    const MonteCarloGradient mc = monte_carlo_policy_gradient(*policy, mdp, options.mc_episodes,
                                                              derive_seed(options.seed, 0x3DB));
    add(check_below("oracle.reinforce_vs_exact", relative_l2(mc.gradient, exact.gradient), 0.02,
                    std::to_string(options.mc_episodes) + " episodes, EMA baseline"));
  }
  {
    const Bandit bandit{Vector<double>::Zero(2), (Vector<double>(2) << 1.0, 0.0).finished()};
    const Vector<double> g = exact_bandit_gradient(bandit, 0.5);
    const Vector<double> closed = (Vector<double>(2) << 0.25, -0.25).finished();
    add(check_below("oracle.bandit_closed_form", (g - closed).cwiseAbs().maxCoeff(), 1e-15,
                    "rewards {1,0}, b = 0.5, uniform"));
    double ema = 0.0, zero = 0.0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      const std::uint64_t s = derive_seed(options.seed, 0xBA4D, rep);
      ema += bandit_reinforce(bandit, BaselineMode::ema, 2000, s).variance / 20.0;
      zero += bandit_reinforce(bandit, BaselineMode::zero, 2000, s).variance / 20.0;
    }
    add(check_below("oracle.bandit_variance_ratio", ema / zero, 1.0,
                    "EMA " + format_double(ema) + " vs b=0 " + format_double(zero) + " over 20 repetitions"));
  }
  {
    const std::vector<Box> tiles{{0, 0, 8, 8}, {0, 8, 8, 8}, {8, 0, 8, 8}, {8, 8, 8, 8}};
    const CoverageSearch best = optimal_coverage_bruteforce(16, 16, tiles, 4);
    add(check_below("oracle.coverage_tiling", std::abs(best.fraction - 1.0), 1e-300, "2x2 tiles, T = 4"));
    const CoverageSearch one = optimal_coverage_bruteforce(16, 16, {Box{2, 3, 5, 7}}, 1);
    add(check_below("oracle.coverage_single_box", std::abs(one.fraction - 35.0 / 256.0), 1e-15, "T = 1"));
  }
  {
    double worst = -1.0;
    for (int inst = 0; inst < 100; ++inst) {
      std::vector<Box> boxes;
      const int n = 3 + static_cast<int>(uniform01(rng) * 5);
      for (int i = 0; i < n; ++i) boxes.push_back(random_box(12, 12, rng));
      const Index steps = 1 + static_cast<Index>(uniform01(rng) * 3);
      const double gap = greedy_coverage(12, 12, boxes, steps).fraction -
                         optimal_coverage_bruteforce(12, 12, boxes, steps).fraction;
      worst = std::max(worst, gap);
    }
    VerifyCheck c{"oracle.greedy_le_bruteforce", worst, 0.0, worst <= 0.0, false, "100 random instances"};
    add(std::move(c));
  }
  {
    int mismatches = 0;
    const Index expected_w[3] = {40, 60, 90};
    for (Index r = 0; r < 3; ++r) {
      const double ratios[3] = {1.5, 1.0, 2.0 / 3.0};
      const BoxExtent e = decode_box(ratios[r], 1.0, 60.0, 120, 160);
      if (e.height != 60 || e.width != expected_w[r]) ++mismatches;
    }
    VerifyCheck c{"decode.box_extents", static_cast<double>(mismatches), 0.0, mismatches == 0, false,
                  "Z = 60, scale 1"};
    add(std::move(c));
  }
  {
    const GradCheckResult r = conv_check(rng, 1.01);
    VerifyCheck c = check_below("canary.corrupted_gradient", r.max_relative_error, kGrad,
                                "analytic gradient scaled by 1.01");
    c.expected_failure = true;
    add(std::move(c));
  }
  return checks;
}

bool verification_passed(const std::vector<VerifyCheck>& checks) {
  for (const auto& c : checks)
    if (c.passed == c.expected_failure) return false;
  return true;
}

void write_verify_report(std::ostream& out, const std::vector<VerifyCheck>& checks) {
  out << "check,measured,threshold,status,detail\n";
  for (const auto& c : checks) {
    std::string status = c.expected_failure ? (c.passed ? "UNEXPECTED-PASS" : "expected-fail")
                                            : (c.passed ? "pass" : "FAIL");
    std::string detail = c.detail;
    for (char& ch : detail)
      if (ch == ',') ch = ';';
    out << c.name << ',' << format_double(c.measured) << ',' << format_double(c.threshold) << ',' << status << ','
        << detail << '\n';
  }
}

}  // namespace seqpatch
