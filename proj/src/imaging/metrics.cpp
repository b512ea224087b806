#include "seqpatch/imaging/metrics.hpp"

#include <cmath>

namespace seqpatch {

namespace {

void require_same_extent(const ImagePlane& a, const ImagePlane& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": extents " + extent_string(a) + " and " + extent_string(b) +
                         " differ");
}

Eigen::ArrayXd gaussian_window(int size, double sigma) {
  Eigen::ArrayXd w(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) w[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
  return w / w.sum();
}

// Separable "valid" filtering.
ImagePlane filter_valid(const ImagePlane& img, const Eigen::ArrayXd& w) {
  const Index k = w.size();
  const Index h = img.rows() - k + 1, cols = img.cols() - k + 1;
  ImagePlane tmp(img.rows(), cols);
  for (Index r = 0; r < img.rows(); ++r)
    for (Index c = 0; c < cols; ++c) tmp(r, c) = (img.row(r).segment(c, k).transpose() * w).sum();
  ImagePlane out(h, cols);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < cols; ++c) out(r, c) = (tmp.col(c).segment(r, k) * w).sum();
  return out;
}

}  // namespace

double mse(const ImagePlane& a, const ImagePlane& b) {
  require_same_extent(a, b, "mse");
  return (denormalized(a) - denormalized(b)).square().mean();
}

double psnr(const ImagePlane& a, const ImagePlane& b) {
  const double e = mse(a, b);
  if (e == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / e));
}

double ssim(const ImagePlane& a, const ImagePlane& b) {
  require_same_extent(a, b, "ssim");
  constexpr int kWindow = 11;
  if (a.rows() < kWindow || a.cols() < kWindow)
    throw ImageError("ssim needs at least 11x11 pixels, got " + extent_string(a));
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Eigen::ArrayXd w = gaussian_window(kWindow, 1.5);
  const ImagePlane x = denormalized(a), y = denormalized(b);
  const ImagePlane mx = filter_valid(x, w), my = filter_valid(y, w);
  const ImagePlane sxx = filter_valid(x * x, w) - mx * mx;
  const ImagePlane syy = filter_valid(y * y, w) - my * my;
  const ImagePlane sxy = filter_valid(x * y, w) - mx * my;
  const ImagePlane map = ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                         ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean();
}

}  // namespace seqpatch
