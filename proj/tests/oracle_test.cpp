#include "doctest.h"

#include "seqpatch/oracle/oracle.hpp"

#include <sstream>

using namespace seqpatch;

namespace {

Box random_box(Index h, Index w, Rng& rng) {
  Box b;
  b.height = 1 + static_cast<Index>(uniform01(rng) * static_cast<double>(h));
  b.width = 1 + static_cast<Index>(uniform01(rng) * static_cast<double>(w));
  b.top = static_cast<Index>(uniform01(rng) * static_cast<double>(h - b.height + 1));
  b.left = static_cast<Index>(uniform01(rng) * static_cast<double>(w - b.width + 1));
  return b;
}

}  // namespace

TEST_CASE("exact policy gradient") {
  const TinyMdp mdp = make_tiny_mdp(3);
  const auto policy = make_tiny_policy(mdp, 4);
  REQUIRE(policy->geometry().action_count() == 16);
  const ExactGradient exact = exact_policy_gradient(*policy, mdp, 0.0);

  SUBCASE("enumerates 16 * 15 sequences whose probabilities sum to one") {
    CHECK(exact.sequences == 240);
    CHECK(std::abs(exact.probability_sum - 1.0) < 1e-10);
    CHECK(exact.gradient.squared_norm() > 0);
  }
  SUBCASE("invariant to the baseline") {
    const ExactGradient shifted = exact_policy_gradient(*policy, mdp, 10.0);
    CHECK(relative_l2(shifted.gradient, exact.gradient) < 1e-10);
    CHECK(shifted.expected_reward == doctest::Approx(exact.expected_reward).epsilon(1e-14));
  }
  SUBCASE("action-independent reward gives the zero vector") {
    TinyMdp constant = mdp;
    constant.reward = [](const ImagePlane&, const CoverageMask&) { return -2.5; };
    CHECK(std::sqrt(exact_policy_gradient(*policy, constant, 0.0).gradient.squared_norm()) < 1e-12);
  }
  SUBCASE("expected reward lies within the reward range") {
    CHECK(std::isfinite(exact.expected_reward));
    CHECK(exact.expected_reward > 0);
  }
  SUBCASE("too many sequences") {
    TinyMdp big = mdp;
    big.steps = 4;
    const auto p = make_tiny_policy(big, 1);
    CHECK_THROWS_AS(exact_policy_gradient(*p, big, 0.0), OracleSizeError);
  }
  SUBCASE("Monte-Carlo REINFORCE converges to the exact gradient") {
    // Relative error shrinks like 1/sqrt(N); 2e5 episodes reach well under 2%.
    const MonteCarloGradient mc = monte_carlo_policy_gradient(*policy, mdp, 40000, 77);
    const double err = relative_l2(mc.gradient, exact.gradient);
    MESSAGE("relative L2 error at 4e4 episodes: " << err);
    CHECK(err < 0.04);
    CHECK(mc.mean_reward == doctest::Approx(exact.expected_reward).epsilon(0.02));
  }
}

TEST_CASE("bandit") {
  const Bandit uniform{Vector<double>::Zero(2), (Vector<double>(2) << 1.0, 0.0).finished()};
  SUBCASE("closed form at b = 0.5") {
    const Vector<double> g = exact_bandit_gradient(uniform, 0.5);
    CHECK(g[0] == 0.25);
    CHECK(g[1] == -0.25);
  }
  SUBCASE("baseline shift leaves the exact gradient unchanged") {
    const Bandit skewed{(Vector<double>(3) << 0.3, -1.2, 0.8).finished(), (Vector<double>(3) << 2, -1, 0.5).finished()};
    const Vector<double> a = exact_bandit_gradient(skewed, 0.0), b = exact_bandit_gradient(skewed, 10.0);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("Monte-Carlo mean agrees with the exact gradient") {
    const BanditEstimate est = bandit_reinforce(uniform, BaselineMode::zero, 20000, 5);
    // b = 0: per-episode gradient is +-(0.5,-0.5) or 0, standard error about 0.0025.
    CHECK(std::abs(est.mean[0] - 0.25) < 0.0125);
    CHECK(est.mean[1] == doctest::Approx(-est.mean[0]).epsilon(1e-12));
  }
  SUBCASE("EMA baseline has lower variance than b = 0") {
    double ema = 0, zero = 0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      ema += bandit_reinforce(uniform, BaselineMode::ema, 1000, rep).variance;
      zero += bandit_reinforce(uniform, BaselineMode::zero, 1000, rep).variance;
    }
    CHECK(ema < zero);
  }
  SUBCASE("mismatched arms") {
    const Bandit bad{Vector<double>::Zero(2), Vector<double>::Zero(3)};
    CHECK_THROWS_AS(exact_bandit_gradient(bad, 0.0), std::invalid_argument);
  }
}

TEST_CASE("coverage oracle") {
  SUBCASE("2x2 tiles with T = 4 reach full coverage") {
    const std::vector<Box> tiles{{0, 0, 8, 8}, {0, 8, 8, 8}, {8, 0, 8, 8}, {8, 8, 8, 8}};
    const CoverageSearch best = optimal_coverage_bruteforce(16, 16, tiles, 4);
    CHECK(best.fraction == 1.0);
    std::vector<std::size_t> sorted = best.sequence;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SUBCASE("single step covers a / A") {
    CHECK(optimal_coverage_bruteforce(10, 12, {Box{1, 1, 3, 5}}, 1).fraction == 15.0 / 120.0);
  }
  SUBCASE("greedy never beats the exhaustive optimum") {
    Rng rng(8);
    int strictly_worse = 0;
    for (int inst = 0; inst < 100; ++inst) {
      std::vector<Box> boxes;
      const int n = 3 + static_cast<int>(uniform01(rng) * 5);
      for (int i = 0; i < n; ++i) boxes.push_back(random_box(10, 10, rng));
      const Index steps = 1 + static_cast<Index>(uniform01(rng) * 3);
      const double greedy = greedy_coverage(10, 10, boxes, steps).fraction;
      const double best = optimal_coverage_bruteforce(10, 10, boxes, steps).fraction;
      CHECK(greedy <= best);
      if (greedy < best) ++strictly_worse;
    }
    MESSAGE(strictly_worse << " of 100 instances where greedy is suboptimal");
  }
  SUBCASE("search space cap") {
    std::vector<Box> boxes(11, Box{0, 0, 2, 2});
    CHECK_THROWS_AS(optimal_coverage_bruteforce(4, 4, boxes, 6), OracleSizeError);
    CHECK_THROWS_AS(optimal_coverage_bruteforce(4, 4, {Box{3, 3, 2, 2}}, 1), DimensionError);
  }
}

TEST_CASE("verification report") {
  std::vector<VerifyCheck> checks{{"a", 1e-6, 1e-4, true, false, "x, y"}, {"canary", 0.01, 1e-4, false, true, ""}};
  CHECK(verification_passed(checks));
  std::ostringstream out;
  write_verify_report(out, checks);
  CHECK(out.str() == "check,measured,threshold,status,detail\na,1e-06,1e-04,pass,x; y\n"
                     "canary,0.01,1e-04,expected-fail,\n");
  checks[1].passed = true;
  CHECK_FALSE(verification_passed(checks));
  checks[1].passed = false;
  checks[0].passed = false;
  CHECK_FALSE(verification_passed(checks));
}
