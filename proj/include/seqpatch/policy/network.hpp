#pragma once

#include "seqpatch/imaging/resample.hpp"
#include "seqpatch/nd/layers.hpp"
#include "seqpatch/policy/distribution.hpp"
#include "seqpatch/policy/geometry.hpp"

#include <memory>

namespace seqpatch {

/// Image plane as a [1,H,W] tensor.
template <typename Scalar>
Tensor<Scalar> plane_tensor(const ImagePlane& img) {
  Tensor<Scalar> t({1, img.rows(), img.cols()});
  t.data = Eigen::Map<const Vector<double>>(img.data(), img.size()).template cast<Scalar>();
  return t;
}

/// Recurrent policy: shared feature extractor for I_t and I_0, a history GRU over
/// past actions, a policy GRU over s_t = [v_t, v_0, v_l], and four linear heads.
template <typename Scalar>
class PolicyNetwork {
 public:
  explicit PolicyNetwork(PolicyGeometry geometry) : geometry_(std::move(geometry)) {
    geometry_.validate();
    const auto& g = geometry_;
    conv_[0] = ConvLayer::add(params, "policy.features.conv1", 1, 8, 5, 2);
    conv_[1] = ConvLayer::add(params, "policy.features.conv2", 8, 8, 3, 2);
    conv_[2] = ConvLayer::add(params, "policy.features.conv3", 8, 16, 3, 2);
    conv_[3] = ConvLayer::add(params, "policy.features.conv4", 16, 32, 3, 2);
    Index side = g.policy_input;
    for (int i = 0; i < 4; ++i) side = (side - 1) / 2 + 1;
    flat_size_ = 32 * side * side;
    feature_fc_ = LinearLayer::add(params, "policy.features.fc", flat_size_, g.feature_dim);
    history_lift_ = LinearLayer::add(params, "policy.history.lift", 4, g.history_dim);
    history_gru_ = GruCell::add(params, "policy.history.gru", g.history_dim, g.history_dim);
    policy_gru_ = GruCell::add(params, "policy.gru", g.state_dim(), g.hidden_dim);
    heads_[0] = LinearLayer::add(params, "policy.head.x", g.hidden_dim, g.grid_x());
    heads_[1] = LinearLayer::add(params, "policy.head.y", g.hidden_dim, g.grid_y());
    heads_[2] = LinearLayer::add(params, "policy.head.ratio", g.hidden_dim, g.ratio_count());
    heads_[3] = LinearLayer::add(params, "policy.head.scale", g.hidden_dim, g.scale_count());
  }

  PolicyNetwork(const PolicyNetwork&) = delete;
  PolicyNetwork& operator=(const PolicyNetwork&) = delete;

  const PolicyGeometry& geometry() const { return geometry_; }

  /// Random initialization. Head weights are drawn from U(+-head_bound), biases zero.
  void init(Rng& rng, double head_bound = 0.01) {
    const double slope = geometry_.leaky_slope;
    for (const auto& c : conv_) {
      const auto& k = params[c.kernel];
      fill_uniform(params[c.kernel], he_uniform_bound(k.dim(1) * k.dim(2) * k.dim(3), slope), rng);
    }
    fill_uniform(params[feature_fc_.weight], he_uniform_bound(flat_size_, 1.0), rng);
    fill_uniform(params[history_lift_.weight], he_uniform_bound(4, 1.0), rng);
    history_gru_.init(params, rng);
    policy_gru_.init(params, rng);
    for (const auto& h : heads_) fill_uniform(params[h.weight], head_bound, rng);
  }

  /// Zeroes all four action heads (uniform distributions).
  void zero_heads() {
    for (const auto& h : heads_) {
      params[h.weight].data.setZero();
      params[h.bias].data.setZero();
    }
  }

  /// Input tensor for the feature extractor: bicubic resize to the policy extent.
  Tensor<Scalar> prepare_input(const ImagePlane& img) const {
    const Index p = geometry_.policy_input;
    return plane_tensor<Scalar>(img.rows() == p && img.cols() == p ? img : bicubic_resize(img, p, p));
  }

  /// 64-d feature of a [1,P,P] input.
  Var<Scalar> extract_features(const Binder<Scalar>& bind, const Var<Scalar>& input) const {
    const Index p = geometry_.policy_input;
    if (input.shape() != Shape{1, p, p})
      throw DimensionError("extract_features: input " + to_string(input.shape()) + ", expected " +
                           to_string(Shape{1, p, p}));
    Var<Scalar> x = input;
    for (const auto& c : conv_) x = leaky_relu(c(bind, x), static_cast<Scalar>(geometry_.leaky_slope));
    return feature_fc_(bind, reshape(x, {flat_size_}));
  }

  /// Folds one action into the history encoding.
  Var<Scalar> fold_history(const Binder<Scalar>& bind, const Var<Scalar>& h, const Action& a) const {
    const auto f = action_features(geometry_, a);
    Tensor<Scalar> t({4});
    for (Index i = 0; i < 4; ++i) t.data[i] = static_cast<Scalar>(f[static_cast<std::size_t>(i)]);
    return history_gru_(bind, history_lift_(bind, bind.tape().constant(std::move(t))), h);
  }

  /// v_l for a whole action history; empty history gives the zero vector.
  Var<Scalar> encode_history(const Binder<Scalar>& bind, const std::vector<Action>& actions) const {
    Var<Scalar> h = bind.tape().constant(Tensor<Scalar>({geometry_.history_dim}));
    for (const auto& a : actions) h = fold_history(bind, h, a);
    return h;
  }

  struct StepOutput {
    ActionDistribution<Scalar> distribution;
    Var<Scalar> hidden;
  };

  /// GRU over s_t, then the four heads normalized by log-softmax.
  StepOutput step_policy(const Binder<Scalar>& bind, const Var<Scalar>& state, const Var<Scalar>& hidden,
                         std::vector<ActionIds> taken) const {
    Var<Scalar> h = policy_gru_(bind, state, hidden);
    std::array<Var<Scalar>, 4> log_heads;
    for (std::size_t c = 0; c < 4; ++c) log_heads[c] = log_softmax(heads_[c](bind, h));
    return {ActionDistribution<Scalar>(log_heads, std::move(taken)), h};
  }

  ParameterSet<Scalar> params;

 private:
  PolicyGeometry geometry_;
  std::array<ConvLayer, 4> conv_;
  Index flat_size_ = 0;
  LinearLayer feature_fc_;
  LinearLayer history_lift_;
  GruCell history_gru_;
  GruCell policy_gru_;
  std::array<LinearLayer, 4> heads_;
};

/// One episode's pass through the policy. The tape lives as long as the rollout so
/// the summed log-probabilities of scored actions can be differentiated at the end.
template <typename Scalar>
class PolicyRollout {
 public:
  PolicyRollout(const PolicyNetwork<Scalar>& net, const ImagePlane& initial, Gradients<Scalar>* sink = nullptr)
      : net_(&net), owned_(std::make_unique<Tape<Scalar>>()), tape_(owned_.get()), sink_(sink) {
    start(initial);
  }

  /// Records onto the binder's tape with the binder's sink.
  PolicyRollout(const PolicyNetwork<Scalar>& net, const Binder<Scalar>& bind, const ImagePlane& initial)
      : net_(&net), tape_(&bind.tape()), sink_(bind.sink()) {
    if (&bind.params() != &net.params) throw std::logic_error("binder belongs to another parameter set");
    start(initial);
  }

  /// Encodes s_t from the current image and returns the masked action distribution.
  const ActionDistribution<Scalar>& observe(const ImagePlane& current) {
    if (observed_) throw std::logic_error("observe called twice without commit");
    Binder<Scalar> bind = binder();
    Var<Scalar> vt = net_->extract_features(bind, tape_->constant(net_->prepare_input(current)));
    state_ = concat<Scalar>({vt, v0_, history_});
    auto out = net_->step_policy(bind, state_, hidden_, taken_);
    hidden_ = out.hidden;
    dist_ = std::move(out.distribution);
    observed_ = true;
    return dist_;
  }

  const ActionDistribution<Scalar>& distribution() const { return dist_; }
  const Tensor<Scalar>& state() const { return state_.value(); }

  /// Records the action taken. With `score`, log pi(a|s_t) joins the differentiable
  /// sum. Returns the masked log-probability under the current distribution, or 0
  /// for actions that are not on the grid.
  double commit(const Action& a, bool score) {
    if (!observed_) throw std::logic_error("commit without observe");
    observed_ = false;
    double lp = 0.0;
    const bool on_grid = a.grid_x >= 0 && a.grid_y >= 0;
    if (on_grid) {
      const ActionIds ids{a.grid_x, a.grid_y, a.ratio_id, a.scale_id};
      lp = dist_.log_prob_value(ids);
      if (score) {
        Var<Scalar> term = dist_.log_prob(ids);
        log_prob_sum_ = log_prob_sum_.valid() ? log_prob_sum_ + term : term;
      }
      taken_.push_back(ids);
    }
    actions_.push_back(a);
    history_ = net_->fold_history(binder(), history_, a);
    return lp;
  }

  const std::vector<Action>& actions() const { return actions_; }

  /// Differentiable sum of committed log-probabilities (invalid when nothing scored).
  const Var<Scalar>& log_prob_sum() const { return log_prob_sum_; }

  /// Sends seed * d(sum log pi)/d(theta) into the sink.
  void backward(Scalar seed) {
    if (!sink_) throw std::logic_error("rollout has no gradient sink");
    if (log_prob_sum_.valid()) tape_->backward(log_prob_sum_, seed);
  }

 private:
  void start(const ImagePlane& initial) {
    const auto& g = net_->geometry();
    Binder<Scalar> bind = binder();
    v0_ = net_->extract_features(bind, tape_->constant(net_->prepare_input(initial)));
    history_ = tape_->constant(Tensor<Scalar>({g.history_dim}));
    hidden_ = tape_->constant(Tensor<Scalar>({g.hidden_dim}));
  }

  Binder<Scalar> binder() const { return Binder<Scalar>(*tape_, net_->params, sink_); }

  const PolicyNetwork<Scalar>* net_;
  std::unique_ptr<Tape<Scalar>> owned_;
  Tape<Scalar>* tape_;
  Gradients<Scalar>* sink_;
  Var<Scalar> v0_, history_, hidden_, state_, log_prob_sum_;
  ActionDistribution<Scalar> dist_;
  std::vector<ActionIds> taken_;
  std::vector<Action> actions_;
  bool observed_ = false;
};

}  // namespace seqpatch
