#include "seqpatch/episode/reward.hpp"

#include "seqpatch/imaging/resample.hpp"

namespace seqpatch {

double compute_reward(const ImagePlane& final_image, const ImagePlane& truth, const ImagePlane& reference,
                      double coverage_fraction, double coverage_weight) {
  return psnr(final_image, truth) - psnr(reference, truth) + coverage_weight * coverage_fraction;
}

double compute_reward(const ImagePlane& final_image, const ImagePlane& truth, const ImagePlane& reference,
                      const CoverageMask& mask, double coverage_weight) {
  if (mask.height() != truth.rows() || mask.width() != truth.cols())
    throw DimensionError("coverage mask does not match the image extent");
  return compute_reward(final_image, truth, reference, mask.fraction(), coverage_weight);
}

ImagePlane initial_estimate(const ImagePlane& lr, Index target_h, Index target_w) {
  return bicubic_resize(lr, target_h, target_w);
}

}  // namespace seqpatch
