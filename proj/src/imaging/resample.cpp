#include "seqpatch/imaging/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace seqpatch {

namespace {

struct Taps {
  std::vector<Index> first;       // first source index per output sample (before clamping)
  std::vector<std::vector<double>> weights;
};

Taps axis_taps(Index in, Index out) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const double stretch = scale < 1.0 ? scale : 1.0;
  const double support = 2.0 / stretch;
  Taps taps;
  taps.first.resize(static_cast<std::size_t>(out));
  taps.weights.resize(static_cast<std::size_t>(out));
  for (Index o = 0; o < out; ++o) {
    const double center = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const Index lo = static_cast<Index>(std::floor(center - support));
    const Index hi = static_cast<Index>(std::ceil(center + support));
    std::vector<double> w;
    double total = 0.0;
    for (Index i = lo; i <= hi; ++i) {
      const double v = stretch * cubic_kernel(stretch * (static_cast<double>(i) - center));
      w.push_back(v);
      total += v;
    }
    for (double& v : w) v /= total;
    taps.first[static_cast<std::size_t>(o)] = lo;
    taps.weights[static_cast<std::size_t>(o)] = std::move(w);
  }
  return taps;
}

}  // namespace

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

ImagePlane bicubic_resize(const ImagePlane& img, Index out_h, Index out_w) {
  if (out_h < 1 || out_w < 1) throw ImageError("bicubic_resize: target extent must be positive");
  if (img.rows() < 1 || img.cols() < 1) throw ImageError("bicubic_resize: empty input");
  const Index in_h = img.rows(), in_w = img.cols();

  const Taps col_taps = axis_taps(in_w, out_w);
  ImagePlane horizontal(in_h, out_w);
  for (Index r = 0; r < in_h; ++r) {
    for (Index c = 0; c < out_w; ++c) {
      const auto& w = col_taps.weights[static_cast<std::size_t>(c)];
      const Index first = col_taps.first[static_cast<std::size_t>(c)];
      double acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k)
        acc += w[k] * img(r, std::clamp<Index>(first + static_cast<Index>(k), 0, in_w - 1));
      horizontal(r, c) = acc;
    }
  }

  const Taps row_taps = axis_taps(in_h, out_h);
  ImagePlane out(out_h, out_w);
  for (Index r = 0; r < out_h; ++r) {
    const auto& w = row_taps.weights[static_cast<std::size_t>(r)];
    const Index first = row_taps.first[static_cast<std::size_t>(r)];
    for (Index c = 0; c < out_w; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k)
        acc += w[k] * horizontal(std::clamp<Index>(first + static_cast<Index>(k), 0, in_h - 1), c);
      out(r, c) = acc;
    }
  }
  return out.cwiseMax(-1.0).cwiseMin(1.0);
}

ImagePlane degrade(const ImagePlane& hr, int factor) {
  if (factor != 4 && factor != 8 && factor != 16)
    throw ImageError("degradation factor must be 4, 8 or 16 (got " + std::to_string(factor) + ")");
  if (hr.rows() % factor != 0 || hr.cols() % factor != 0)
    throw ImageError("image extent " + extent_string(hr) + " is not divisible by factor " +
                     std::to_string(factor));
  return bicubic_resize(hr, hr.rows() / factor, hr.cols() / factor);
}

ImagePlane area_downsample(const ImagePlane& img, Index factor) {
  if (factor < 1 || img.rows() % factor != 0 || img.cols() % factor != 0)
    throw ImageError("area_downsample: extent " + extent_string(img) + " not divisible by " +
                     std::to_string(factor));
  const Index h = img.rows() / factor, w = img.cols() / factor;
  ImagePlane out(h, w);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) out(r, c) = img.block(r * factor, c * factor, factor, factor).sum() * inv;
  return out;
}

}  // namespace seqpatch
