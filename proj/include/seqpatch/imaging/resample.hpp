#pragma once

#include "seqpatch/imaging/plane.hpp"

namespace seqpatch {

/// Separable cubic-convolution resize (Keys kernel, a = -0.5) with half-pixel
/// centers and edge clamping. When shrinking, the kernel is stretched by the
/// scale factor so it low-passes before decimating. Output is clipped to [-1, 1].
ImagePlane bicubic_resize(const ImagePlane& img, Index out_h, Index out_w);

/// Low-resolution input for a training pair: bicubic downscale by 4, 8 or 16.
/// Throws ImageError when the factor does not divide both extents.
ImagePlane degrade(const ImagePlane& hr, int factor);

/// Mean over non-overlapping factor x factor blocks.
ImagePlane area_downsample(const ImagePlane& img, Index factor);

/// The Keys cubic kernel with a = -0.5.
double cubic_kernel(double x);

}  // namespace seqpatch
