#pragma once

#include "seqpatch/imaging/resample.hpp"
#include "seqpatch/nd/layers.hpp"

#include <array>

namespace seqpatch {

/// Extents of the enhancer. The network runs at base = target / 4; its two
/// stride-2 transposed convolutions restore the target extent.
struct EnhancerConfig {
  Index target_h = 64;
  Index target_w = 64;
  Index state_dim = 192;
  double leaky_slope = 0.2;

  static constexpr Index kUpscale = 4;
  Index base_h() const { return target_h / kUpscale; }
  Index base_w() const { return target_w / kUpscale; }

  void validate() const {
    if (target_h % kUpscale || target_w % kUpscale || target_h < 8 || target_w < 8)
      throw DimensionError("enhancer target extent must be a multiple of 4 and at least 8");
    if (state_dim < 1) throw DimensionError("enhancer state_dim must be positive");
  }
};

/// Planes 1-3 of the conditioned input, decimated to base resolution. Plane 4
/// (global context) is produced by the network itself.
struct PatchPlanes {
  ImagePlane masked;
  ImagePlane current;
  ImagePlane initial;
};

/// Masks the current image outside `box`, then 4x4 area-averages it together with
/// I_t and I_0.
inline PatchPlanes assemble_planes(const Box& box, const ImagePlane& current, const ImagePlane& initial) {
  if (current.rows() != initial.rows() || current.cols() != initial.cols())
    throw DimensionError("assemble_input: I_t is " + extent_string(current) + ", I_0 is " + extent_string(initial));
  if (box.area() < 1) throw DimensionError("assemble_input: empty box");
  if (!box.fits(current.rows(), current.cols())) throw DimensionError("assemble_input: box outside the image");
  ImagePlane masked = ImagePlane::Zero(current.rows(), current.cols());
  masked.block(box.top, box.left, box.height, box.width) = crop_view(current, box);
  const Index f = EnhancerConfig::kUpscale;
  return {area_downsample(masked, f), area_downsample(current, f), area_downsample(initial, f)};
}

/// inside box: clip(I_t + residual, [-1,1]); outside: I_t unchanged.
inline ImagePlane paste_patch(const ImagePlane& current, const ImagePlane& residual, const Box& box) {
  if (residual.rows() != current.rows() || residual.cols() != current.cols())
    throw DimensionError("paste_patch: residual is " + extent_string(residual) + ", image is " +
                         extent_string(current));
  if (!box.fits(current.rows(), current.cols())) throw DimensionError("paste_patch: box outside the image");
  ImagePlane next = current;
  next.block(box.top, box.left, box.height, box.width) =
      (crop_view(current, box) + crop_view(residual, box)).cwiseMax(-1.0).cwiseMin(1.0);
  return next;
}

/// Global-context projection plus the seven-layer hourglass:
///   conv k5 c64 | conv k3 c32 | deconv k3 s2 c32 | conv k3 c32 | deconv k3 s2 c8 |
///   conv k3 c8 | conv k5 c1, leaky rectifiers between layers.
template <typename Scalar>
class EnhancerNetwork {
 public:
  explicit EnhancerNetwork(EnhancerConfig config) : config_(config) {
    config_.validate();
    global_ = LinearLayer::add(params, "enhancer.global", config_.state_dim, config_.base_h() * config_.base_w());
    layers_[0] = ConvLayer::add(params, "enhancer.conv1", 4, 64, 5, 1);
    layers_[1] = ConvLayer::add(params, "enhancer.conv2", 64, 32, 3, 1);
    layers_[2] = ConvLayer::add(params, "enhancer.deconv3", 32, 32, 3, 2, true);
    layers_[3] = ConvLayer::add(params, "enhancer.conv4", 32, 32, 3, 1);
    layers_[4] = ConvLayer::add(params, "enhancer.deconv5", 32, 8, 3, 2, true);
    layers_[5] = ConvLayer::add(params, "enhancer.conv6", 8, 8, 3, 1);
    layers_[6] = ConvLayer::add(params, "enhancer.conv7", 8, 1, 5, 1);
  }

  EnhancerNetwork(const EnhancerNetwork&) = delete;
  EnhancerNetwork& operator=(const EnhancerNetwork&) = delete;

  const EnhancerConfig& config() const { return config_; }

  /// He-uniform kernels, zero biases. With `zero_output`, the last layer and the
  /// global-context map start at zero, so the first residuals are exactly zero and
  /// I_G grows only as far as the patch loss asks for it.
  void init(Rng& rng, bool zero_output = true) {
    fill_uniform(params[global_.weight], he_uniform_bound(config_.state_dim, 1.0), rng);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Tensor<Scalar>& k = params[layers_[i].kernel];
      // Fan-in of a transposed kernel [in, out, k, k] is in * k * k / stride^2.
      const Index fan_in = layers_[i].transposed
                               ? k.dim(0) * k.dim(2) * k.dim(3) / (layers_[i].stride * layers_[i].stride)
                               : k.dim(1) * k.dim(2) * k.dim(3);
      fill_uniform(k, he_uniform_bound(fan_in, config_.leaky_slope), rng);
    }
    if (zero_output) {
      params[layers_.back().kernel].data.setZero();
      params[global_.weight].data.setZero();
    }
  }

  /// I_G: fully connected map of s_t to a [1, base_h, base_w] plane.
  Var<Scalar> global_context(const Binder<Scalar>& bind, const Var<Scalar>& state) const {
    if (state.size() != config_.state_dim)
      throw DimensionError("global context expects a state of " + std::to_string(config_.state_dim) + ", got " +
                           to_string(state.shape()));
    return reshape(global_(bind, reshape(state, {state.size()})), {1, config_.base_h(), config_.base_w()});
  }

  /// [4, base_h, base_w] input stack: masked patch, I_t, I_0, I_G.
  Var<Scalar> stack_input(const Binder<Scalar>& bind, const PatchPlanes& planes, const Var<Scalar>& context) const {
    const Index bh = config_.base_h(), bw = config_.base_w();
    for (const ImagePlane* p : {&planes.masked, &planes.current, &planes.initial})
      if (p->rows() != bh || p->cols() != bw)
        throw DimensionError("enhancer planes must be " + std::to_string(bh) + "x" + std::to_string(bw) + ", got " +
                             extent_string(*p));
    if (context.shape() != Shape{1, bh, bw}) throw DimensionError("global context has the wrong extent");
    Tensor<Scalar> fixed({3, bh, bw});
    Index off = 0;
    for (const ImagePlane* p : {&planes.masked, &planes.current, &planes.initial}) {
      fixed.data.segment(off, p->size()) = Eigen::Map<const Vector<double>>(p->data(), p->size()).template cast<Scalar>();
      off += p->size();
    }
    return concat<Scalar>({bind.tape().constant(std::move(fixed)), context});
  }

  /// Full-resolution residual [1, target_h, target_w].
  Var<Scalar> forward(const Binder<Scalar>& bind, const Var<Scalar>& stack) const {
    const Shape expected{4, config_.base_h(), config_.base_w()};
    if (stack.shape() != expected)
      throw DimensionError("enhance_patch: stack " + to_string(stack.shape()) + ", expected " + to_string(expected));
    const Scalar slope = static_cast<Scalar>(config_.leaky_slope);
    Var<Scalar> x = stack;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = leaky_relu(layers_[i](bind, x), slope);
    return layers_.back()(bind, x);
  }

  ParameterSet<Scalar> params;

 private:
  EnhancerConfig config_;
  LinearLayer global_;
  std::array<ConvLayer, 7> layers_;
};

/// Everything one enhancement step sees.
template <typename Scalar>
struct PatchContext {
  const ImagePlane& current;
  const ImagePlane& initial;
  const ImagePlane* truth;  // needed for the supervised loss and the oracle
  Box box;
  const Tensor<Scalar>& state;
};

struct PatchResult {
  ImagePlane next;
  double loss = 0.0;  // masked MSE of the pre-clip patch; 0 without ground truth
};

/// Produces I_{t+1} for one attended box.
template <typename Scalar>
class LocalEnhancer {
 public:
  virtual ~LocalEnhancer() = default;
  /// With `sink`, the gradient of the supervised loss is added into it.
  virtual PatchResult enhance(const PatchContext<Scalar>& ctx, Gradients<Scalar>* sink) const = 0;
};

template <typename Scalar>
class LearnedEnhancer final : public LocalEnhancer<Scalar> {
 public:
  explicit LearnedEnhancer(const EnhancerNetwork<Scalar>& net) : net_(net) {}

  PatchResult enhance(const PatchContext<Scalar>& ctx, Gradients<Scalar>* sink) const override {
    const EnhancerConfig& c = net_.config();
    if (ctx.current.rows() != c.target_h || ctx.current.cols() != c.target_w)
      throw DimensionError("enhancer expects " + std::to_string(c.target_h) + "x" + std::to_string(c.target_w) +
                           " images, got " + extent_string(ctx.current));
    Tape<Scalar> tape;
    Binder<Scalar> bind(tape, net_.params, sink);
    Var<Scalar> context = net_.global_context(bind, tape.constant(ctx.state));
    Var<Scalar> residual = net_.forward(bind, net_.stack_input(bind, assemble_planes(ctx.box, ctx.current, ctx.initial), context));
    PatchResult out;
    if (ctx.truth) {
      Tensor<Scalar> target({1, c.target_h, c.target_w});
      const ImagePlane diff = *ctx.truth - ctx.current;
      target.data = Eigen::Map<const Vector<double>>(diff.data(), diff.size()).template cast<Scalar>();
      Var<Scalar> loss = masked_mse(residual, target, ctx.box);
      out.loss = static_cast<double>(loss.value().data[0]);
      if (sink) tape.backward(loss);
    }
    ImagePlane r(c.target_h, c.target_w);
    Eigen::Map<Vector<double>>(r.data(), r.size()) = residual.value().data.template cast<double>();
    out.next = paste_patch(ctx.current, r, ctx.box);
    return out;
  }

  const EnhancerNetwork<Scalar>& network() const { return net_; }

 private:
  const EnhancerNetwork<Scalar>& net_;
};

/// Test enhancer: copies the ground truth into the box.
template <typename Scalar>
class OracleEnhancer final : public LocalEnhancer<Scalar> {
 public:
  PatchResult enhance(const PatchContext<Scalar>& ctx, Gradients<Scalar>*) const override {
    if (!ctx.truth) throw std::logic_error("oracle enhancer needs the ground truth");
    PatchResult out;
    out.next = ctx.current;
    out.next.block(ctx.box.top, ctx.box.left, ctx.box.height, ctx.box.width) = crop_view(*ctx.truth, ctx.box);
    return out;
  }
};

}  // namespace seqpatch
