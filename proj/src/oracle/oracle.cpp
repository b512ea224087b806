#include "seqpatch/oracle/oracle.hpp"

#include "seqpatch/imaging/synthetic.hpp"

#include <cmath>

namespace seqpatch {

double TinyMdp::reward_of(const ImagePlane& final_image, const CoverageMask& coverage) const {
  if (reward) return reward(final_image, coverage);
  return compute_reward(final_image, hr, reference, coverage, coverage_weight);
}

TinyMdp make_tiny_mdp(std::uint64_t seed) {
  TinyMdp m;
  PolicyGeometry& g = m.geometry;
  g.image_h = g.image_w = 16;
  g.grid_stride = 4;
  g.box_base = 6;
  g.ratios = {1.0};
  g.scales = {1.0};
  g.policy_input = 16;
  g.feature_dim = 4;
  g.history_dim = 4;
  g.hidden_dim = 8;
  m.hr = synthetic_texture(seed, 16, 16);
  m.lr = degrade(m.hr, 4);
  m.reference = BicubicReference().restore(m.lr, 16, 16);
  m.steps = 2;
  return m;
}

std::unique_ptr<PolicyNetwork<double>> make_tiny_policy(const TinyMdp& mdp, std::uint64_t seed) {
  auto net = std::make_unique<PolicyNetwork<double>>(mdp.geometry);
  Rng rng(seed);
  net->init(rng, 0.5);
  return net;
}

namespace {

ActionIds ids_of(const PolicyGeometry& g, Index flat) {
  ActionIds a{};
  a[0] = flat % g.grid_x();
  flat /= g.grid_x();
  a[1] = flat % g.grid_y();
  flat /= g.grid_y();
  a[2] = flat % g.ratio_count();
  a[3] = flat / g.ratio_count();
  return a;
}

bool has_repeat(const std::vector<Index>& seq) {
  for (std::size_t i = 0; i < seq.size(); ++i)
    for (std::size_t j = i + 1; j < seq.size(); ++j)
      if (seq[i] == seq[j]) return true;
  return false;
}

// Odometer increment; false once every digit has wrapped.
bool next_sequence(std::vector<Index>& seq, Index radix) {
  for (std::size_t i = seq.size(); i-- > 0;) {
    if (++seq[i] < radix) return true;
    seq[i] = 0;
  }
  return false;
}

}  // namespace

ExactGradient exact_policy_gradient(const PolicyNetwork<double>& policy, const TinyMdp& mdp, double baseline) {
  const PolicyGeometry& g = policy.geometry();
  const Index actions = g.action_count();
  if (mdp.steps < 1) throw std::invalid_argument("tiny MDP needs at least one step");
  double count = 1.0;
  for (Index t = 0; t < mdp.steps; ++t) count *= static_cast<double>(actions - t);
  if (count > static_cast<double>(kMaxEnumeratedSequences))
    throw OracleSizeError("exact_policy_gradient: " + std::to_string(static_cast<long long>(count)) +
                          " sequences exceed the cap of " + std::to_string(kMaxEnumeratedSequences));

  ExactGradient out{Gradients<double>(policy.params)};
  const OracleEnhancer<double> enhancer;
  const ImagePlane initial = initial_estimate(mdp.lr, g.image_h, g.image_w);
  std::vector<Index> seq(static_cast<std::size_t>(mdp.steps), 0);
  do {
    if (has_repeat(seq)) continue;
    PolicyRollout<double> roll(policy, initial, &out.gradient);
    ImagePlane current = initial;
    CoverageMask coverage(g.image_h, g.image_w);
    double log_p = 0.0;
    for (Index flat : seq) {
      roll.observe(current);
      const ActionIds ids = ids_of(g, flat);
      const Action a = make_action(g, ids[0], ids[1], ids[2], ids[3]);
      log_p += roll.commit(a, true);
      const Box box = action_box(a, g.image_h, g.image_w);
      current = enhancer.enhance({current, initial, &mdp.hr, box, roll.state()}, nullptr).next;
      coverage.cover(box);
    }
    const double p = std::exp(log_p);
    const double r = mdp.reward_of(current, coverage);
    roll.backward(p * (r - baseline));
    out.probability_sum += p;
    out.expected_reward += p * r;
    ++out.sequences;
  } while (next_sequence(seq, actions));
  return out;
}

MonteCarloGradient monte_carlo_policy_gradient(const PolicyNetwork<double>& policy, const TinyMdp& mdp,
                                               std::size_t episodes, std::uint64_t seed, BaselineMode baseline,
                                               std::size_t batch) {
  if (episodes == 0 || batch == 0) throw std::invalid_argument("monte_carlo_policy_gradient: empty run");
  MonteCarloGradient out{Gradients<double>(policy.params)};
  const OracleEnhancer<double> enhancer;
  const EpisodeSetup<double> setup{policy, enhancer, ActionSource::sample, mdp.steps};
  RewardBaseline b(baseline, 0.9);
  const double scale = 1.0 / static_cast<double>(episodes);
  double reward_sum = 0.0;
  for (std::size_t start = 0; start < episodes; start += batch) {
    const std::size_t n = std::min(batch, episodes - start);
    std::vector<std::unique_ptr<Episode<double>>> eps;
    std::vector<double> rewards;
    double mean = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      auto ep = std::make_unique<Episode<double>>(setup, mdp.lr, &mdp.hr, derive_seed(seed, start + e), &out.gradient);
      while (!ep->done()) ep->step();
      const double r = mdp.reward_of(ep->trajectory().final_image, ep->trajectory().coverage);
      ep->finish(r);
      rewards.push_back(r);
      mean += r;
      eps.push_back(std::move(ep));
    }
    mean /= static_cast<double>(n);
    const double bv = b.value_for(mean);
    for (std::size_t e = 0; e < n; ++e) eps[e]->backward_policy(scale * (rewards[e] - bv));
    b.update(mean);
    reward_sum += mean * static_cast<double>(n);
  }
  out.mean_reward = reward_sum / static_cast<double>(episodes);
  out.episodes = episodes;
  return out;
}

double relative_l2(const Gradients<double>& a, const Gradients<double>& reference) {
  if (a.size() != reference.size()) throw DimensionError("relative_l2: gradient sets differ");
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - reference[i]).squaredNorm();
    norm += reference[i].squaredNorm();
  }
  return std::sqrt(diff) / std::sqrt(norm);
}

Vector<double> exact_bandit_gradient(const Bandit& bandit, double baseline) {
  const Index k = bandit.logits.size();
  if (k == 0 || bandit.rewards.size() != k) throw std::invalid_argument("bandit needs one reward per arm");
  const Vector<double> shifted = bandit.logits.array() - bandit.logits.maxCoeff();
  const Vector<double> pi = shifted.array().exp() / shifted.array().exp().sum();
  Vector<double> grad = Vector<double>::Zero(k);
  for (Index a = 0; a < k; ++a) {
    Vector<double> score = -pi;
    score[a] += 1.0;
    grad += pi[a] * (bandit.rewards[a] - baseline) * score;
  }
  return grad;
}

BanditEstimate bandit_reinforce(const Bandit& bandit, BaselineMode mode, std::size_t episodes, std::uint64_t seed,
                                std::size_t batch) {
  const Index k = bandit.logits.size();
  if (k == 0 || bandit.rewards.size() != k) throw std::invalid_argument("bandit needs one reward per arm");
  if (episodes == 0 || batch == 0) throw std::invalid_argument("bandit_reinforce: empty run");
  ParameterSet<double> params;
  const std::size_t logits = params.add("bandit.logits", {k});
  params[logits].data = bandit.logits;
  Rng rng(seed);
  RewardBaseline b(mode, 0.9);
  std::vector<Vector<double>> samples;
  samples.reserve(episodes);
  for (std::size_t start = 0; start < episodes; start += batch) {
    const std::size_t n = std::min(batch, episodes - start);
    std::vector<Vector<double>> scores;
    std::vector<double> rewards;
    double mean = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      Gradients<double> g(params);
      Tape<double> tape;
      Binder<double> bind(tape, params, &g);
      const Var<double> unit = log_softmax(tape.constant(Tensor<double>({1})));
      const ActionDistribution<double> dist({log_softmax(bind(logits)), unit, unit, unit}, {});
      const ActionIds a = dist.sample(rng);
      tape.backward(dist.log_prob(a));
      scores.push_back(g[logits]);
      rewards.push_back(bandit.rewards[a[0]]);
      mean += rewards.back();
    }
    mean /= static_cast<double>(n);
    const double bv = b.value_for(mean);
    for (std::size_t e = 0; e < n; ++e) samples.push_back((rewards[e] - bv) * scores[e]);
    b.update(mean);
  }
  BanditEstimate out;
  out.mean = Vector<double>::Zero(k);
  for (const auto& s : samples) out.mean += s;
  out.mean /= static_cast<double>(episodes);
  for (const auto& s : samples) out.variance += (s - out.mean).squaredNorm();
  out.variance /= static_cast<double>(episodes);
  return out;
}

namespace {

void check_boxes(Index image_h, Index image_w, const std::vector<Box>& boxes, Index steps) {
  if (boxes.empty()) throw std::invalid_argument("coverage search needs at least one box");
  if (steps < 1) throw std::invalid_argument("coverage search needs at least one step");
  for (const Box& b : boxes)
    if (!b.fits(image_h, image_w)) throw DimensionError("coverage search: box outside the image");
}

void search(const std::vector<Box>& boxes, Index remaining, const CoverageMask& mask, std::vector<std::size_t>& path,
            CoverageSearch& best) {
  if (remaining == 0) {
    const double f = mask.fraction();
    if (f > best.fraction || best.sequence.empty()) {
      best.fraction = f;
      best.sequence = path;
    }
    return;
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    CoverageMask next = mask;
    next.cover(boxes[i]);
    path.push_back(i);
    search(boxes, remaining - 1, next, path, best);
    path.pop_back();
  }
}

}  // namespace

CoverageSearch optimal_coverage_bruteforce(Index image_h, Index image_w, const std::vector<Box>& boxes, Index steps) {
  check_boxes(image_h, image_w, boxes, steps);
  const double space = std::pow(static_cast<double>(boxes.size()), static_cast<double>(steps));
  if (space > static_cast<double>(kMaxCoverageSequences))
    throw OracleSizeError("optimal_coverage_bruteforce: " + std::to_string(boxes.size()) + "^" +
                          std::to_string(steps) + " sequences exceed the cap of " +
                          std::to_string(kMaxCoverageSequences));
  CoverageSearch best;
  std::vector<std::size_t> path;
  search(boxes, steps, CoverageMask(image_h, image_w), path, best);
  return best;
}

CoverageSearch greedy_coverage(Index image_h, Index image_w, const std::vector<Box>& boxes, Index steps) {
  check_boxes(image_h, image_w, boxes, steps);
  CoverageSearch out;
  CoverageMask mask(image_h, image_w);
  for (Index t = 0; t < steps; ++t) {
    std::size_t pick = 0;
    long best_gain = -1;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      long gain = 0;
      const Box& b = boxes[i];
      for (Index y = b.top; y < b.top + b.height; ++y)
        for (Index x = b.left; x < b.left + b.width; ++x) gain += mask.at(y, x) ? 0 : 1;
      if (gain > best_gain) {
        best_gain = gain;
        pick = i;
      }
    }
    mask.cover(boxes[pick]);
    out.sequence.push_back(pick);
  }
  out.fraction = mask.fraction();
  return out;
}

}  // namespace seqpatch
