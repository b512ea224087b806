#pragma once

#include "seqpatch/nd/ops.hpp"
#include "seqpatch/nd/params.hpp"

#include <array>
#include <stdexcept>

namespace seqpatch {

/// Component ids (grid x, grid y, ratio, scale) of a grid action.
using ActionIds = std::array<Index, 4>;

/// Raised when scoring an action whose probability is zero after masking.
class MaskedActionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Four independent categorical heads with previously taken tuples removed:
///   p(a) = prod_c p_c(a_c) / (1 - sum_{m in taken} prod_c p_c(m_c))   if a not taken
template <typename Scalar>
class ActionDistribution {
 public:
  ActionDistribution() = default;

  /// From normalized per-head log-probabilities recorded on a tape.
  ActionDistribution(std::array<Var<Scalar>, 4> log_heads, std::vector<ActionIds> taken)
      : log_heads_(log_heads), taken_(std::move(taken)) {
    for (std::size_t c = 0; c < 4; ++c) probs_[c] = log_heads_[c].value().data.template cast<double>().array().exp();
    finish();
  }

  /// From plain probability vectors (no gradient).
  ActionDistribution(std::array<Vector<double>, 4> probs, std::vector<ActionIds> taken)
      : probs_(std::move(probs)), taken_(std::move(taken)) {
    finish();
  }

  const Vector<double>& head(std::size_t c) const { return probs_[c]; }
  Index head_size(std::size_t c) const { return probs_[c].size(); }
  const std::vector<ActionIds>& taken() const { return taken_; }
  double masked_mass() const { return masked_mass_; }

  bool is_masked(const ActionIds& a) const {
    return std::find(taken_.begin(), taken_.end(), a) != taken_.end();
  }

  Index unmasked_count() const {
    Index total = 1;
    for (const auto& p : probs_) total *= p.size();
    return total - static_cast<Index>(taken_.size());
  }

  /// Product of head probabilities, before masking.
  double raw_joint(const ActionIds& a) const {
    double p = 1.0;
    for (std::size_t c = 0; c < 4; ++c) p *= probs_[c][a[c]];
    return p;
  }

  double probability(const ActionIds& a) const {
    check_range(a);
    return is_masked(a) ? 0.0 : raw_joint(a) / (1.0 - masked_mass_);
  }

  double log_prob_value(const ActionIds& a) const {
    check_range(a);
    if (is_masked(a)) throw MaskedActionError("action was already taken; its probability is 0");
    double lp = -std::log1p(-masked_mass_);
    for (std::size_t c = 0; c < 4; ++c) lp += std::log(probs_[c][a[c]]);
    return lp;
  }

  /// Differentiable masked log-probability; needs the tape-backed constructor.
  Var<Scalar> log_prob(const ActionIds& a) const {
    check_range(a);
    if (!log_heads_[0].valid()) throw std::logic_error("distribution carries no tape");
    if (is_masked(a)) throw MaskedActionError("action was already taken; its probability is 0");
    Var<Scalar> lp = component_sum(a);
    if (taken_.empty()) return lp;
    Var<Scalar> mass = exp(component_sum(taken_.front()));
    for (std::size_t i = 1; i < taken_.size(); ++i) mass = mass + exp(component_sum(taken_[i]));
    return lp - log(affine(mass, Scalar(-1), Scalar(1)));
  }

  /// Per-head draws, redrawn while the tuple is masked; falls back to sampling the
  /// enumerated joint when rejections pile up.
  ActionIds sample(Rng& rng) const {
    for (int attempt = 0; attempt < 64; ++attempt) {
      ActionIds a;
      for (std::size_t c = 0; c < 4; ++c) a[c] = draw(probs_[c], rng);
      if (!is_masked(a)) return a;
    }
    double u = uniform01(rng) * (1.0 - masked_mass_);
    ActionIds last{-1, -1, -1, -1};
    bool done = false;
    for_each_unmasked([&](const ActionIds& a, double p) {
      if (done) return;
      last = a;
      u -= p;
      if (u < 0) done = true;
    });
    return last;
  }

  /// Per-head argmax; if that tuple is masked, the most probable unmasked tuple.
  ActionIds greedy() const {
    ActionIds a;
    for (std::size_t c = 0; c < 4; ++c) probs_[c].maxCoeff(&a[c]);
    if (!is_masked(a)) return a;
    double best = -1.0;
    for_each_unmasked([&](const ActionIds& cand, double p) {
      if (p > best) {
        best = p;
        a = cand;
      }
    });
    return a;
  }

  /// Visits unmasked tuples in lexicographic order with their raw joint probability.
  template <typename Fn>
  void for_each_unmasked(Fn&& fn) const {
    ActionIds a{};
    for (a[0] = 0; a[0] < probs_[0].size(); ++a[0])
      for (a[1] = 0; a[1] < probs_[1].size(); ++a[1])
        for (a[2] = 0; a[2] < probs_[2].size(); ++a[2])
          for (a[3] = 0; a[3] < probs_[3].size(); ++a[3])
            if (!is_masked(a)) fn(a, raw_joint(a));
  }

 private:
  void finish() {
    for (const auto& p : probs_)
      if (p.size() < 1) throw DimensionError("action head must be non-empty");
    masked_mass_ = 0.0;
    for (const auto& t : taken_) {
      check_range(t);
      masked_mass_ += raw_joint(t);
    }
    if (unmasked_count() < 1) throw MaskedActionError("every action has been taken");
  }

  void check_range(const ActionIds& a) const {
    for (std::size_t c = 0; c < 4; ++c)
      if (a[c] < 0 || a[c] >= probs_[c].size()) throw std::out_of_range("action id out of range for its head");
  }

  Var<Scalar> component_sum(const ActionIds& a) const {
    Var<Scalar> s = pick(log_heads_[0], a[0]);
    for (std::size_t c = 1; c < 4; ++c) s = s + pick(log_heads_[c], a[c]);
    return s;
  }

  static Index draw(const Vector<double>& p, Rng& rng) {
    double u = uniform01(rng);
    for (Index i = 0; i + 1 < p.size(); ++i) {
      u -= p[i];
      if (u < 0) return i;
    }
    return p.size() - 1;
  }

  std::array<Var<Scalar>, 4> log_heads_{};
  std::array<Vector<double>, 4> probs_;
  std::vector<ActionIds> taken_;
  double masked_mass_ = 0.0;
};

}  // namespace seqpatch
