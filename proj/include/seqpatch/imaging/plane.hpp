#pragma once

#include "seqpatch/geometry.hpp"

#include <Eigen/Core>

#include <stdexcept>

namespace seqpatch {

/// Single-channel image. Values live in the normalized space [-1, 1]; metrics and
/// file I/O work on the denormalized space [0, 1].
using ImagePlane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Malformed image data or incompatible image extents.
class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double normalize_value(double unit) { return 2.0 * unit - 1.0; }
inline double denormalize_value(double v) { return (v + 1.0) * 0.5; }

inline ImagePlane normalized(const ImagePlane& unit) { return unit * 2.0 - 1.0; }
inline ImagePlane denormalized(const ImagePlane& img) { return (img + 1.0) * 0.5; }

inline std::string extent_string(const ImagePlane& img) {
  return std::to_string(img.rows()) + "x" + std::to_string(img.cols());
}

/// Read-only view of the boxed region.
inline auto crop_view(const ImagePlane& img, const Box& box) {
  return img.block(box.top, box.left, box.height, box.width);
}

}  // namespace seqpatch
