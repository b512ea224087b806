#pragma once

#include "seqpatch/enhancer/network.hpp"
#include "seqpatch/episode/coverage.hpp"
#include "seqpatch/imaging/metrics.hpp"

#include <memory>
#include <string>

namespace seqpatch {

/// r = psnr(I_T, gt) - psnr(I_ref, gt) + lambda * coverage_fraction
double compute_reward(const ImagePlane& final_image, const ImagePlane& truth, const ImagePlane& reference,
                      double coverage_fraction, double coverage_weight);
double compute_reward(const ImagePlane& final_image, const ImagePlane& truth, const ImagePlane& reference,
                      const CoverageMask& mask, double coverage_weight);

/// I_0: bicubic upscale of the LR input to the target extent.
ImagePlane initial_estimate(const ImagePlane& lr, Index target_h, Index target_w);

/// Fixed single-pass restorer whose output anchors the reward.
class ReferenceRestorer {
 public:
  virtual ~ReferenceRestorer() = default;
  virtual ImagePlane restore(const ImagePlane& lr, Index target_h, Index target_w) const = 0;
  virtual std::string name() const = 0;
};

class BicubicReference final : public ReferenceRestorer {
 public:
  ImagePlane restore(const ImagePlane& lr, Index target_h, Index target_w) const override {
    return initial_estimate(lr, target_h, target_w);
  }
  std::string name() const override { return "bicubic"; }
};

/// One full-image pass of an enhancer network with a zero policy state.
template <typename Scalar>
class SinglePassReference final : public ReferenceRestorer {
 public:
  explicit SinglePassReference(const EnhancerNetwork<Scalar>& net) : net_(net) {}

  ImagePlane restore(const ImagePlane& lr, Index target_h, Index target_w) const override {
    const ImagePlane i0 = initial_estimate(lr, target_h, target_w);
    const Tensor<Scalar> state({net_.config().state_dim});
    return LearnedEnhancer<Scalar>(net_).enhance({i0, i0, nullptr, Box{0, 0, target_h, target_w}, state}, nullptr).next;
  }
  std::string name() const override { return "single_pass"; }

 private:
  const EnhancerNetwork<Scalar>& net_;
};

}  // namespace seqpatch
