#pragma once

#include "seqpatch/imaging/plane.hpp"

namespace seqpatch {

/// PSNR reported when the two images are identical.
inline constexpr double kPsnrCap = 99.0;

/// Mean squared error between the denormalized ([0,1]) images.
double mse(const ImagePlane& a, const ImagePlane& b);

/// 10 log10(1 / MSE) on [0,1] values with peak 1.0; capped at kPsnrCap.
double psnr(const ImagePlane& a, const ImagePlane& b);

/// Mean SSIM over all fully-covered 11x11 Gaussian windows (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1. Needs at least 11x11 pixels.
double ssim(const ImagePlane& a, const ImagePlane& b);

}  // namespace seqpatch
