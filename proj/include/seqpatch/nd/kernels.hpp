#pragma once

#include "seqpatch/nd/tensor.hpp"

namespace seqpatch {

/// Extents of a 2-D cross-correlation over a [channels, in_h, in_w] input.
struct ConvGeometry {
  Index channels = 0;
  Index in_h = 0, in_w = 0;
  Index kernel_h = 0, kernel_w = 0;
  Index stride = 1, pad = 0;
  Index out_h = 0, out_w = 0;

  Index patch_size() const { return channels * kernel_h * kernel_w; }
  Index out_pixels() const { return out_h * out_w; }
};

inline ConvGeometry conv_geometry(Index channels, Index in_h, Index in_w, Index kernel_h,
                                  Index kernel_w, Index stride, Index pad) {
  if (kernel_h < 1 || kernel_w < 1) throw DimensionError("kernel extent must be >= 1");
  if (stride < 1) throw DimensionError("stride must be positive");
  if (pad < 0) throw DimensionError("padding must be non-negative");
  if (in_h + 2 * pad < kernel_h || in_w + 2 * pad < kernel_w)
    throw DimensionError("kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                         " exceeds padded input " + std::to_string(in_h + 2 * pad) + "x" +
                         std::to_string(in_w + 2 * pad));
  ConvGeometry g;
  g.channels = channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  g.pad = pad;
  g.out_h = (in_h + 2 * pad - kernel_h) / stride + 1;
  g.out_w = (in_w + 2 * pad - kernel_w) / stride + 1;
  return g;
}

/// Unfolds the input into a [channels*kh*kw, out_h*out_w] matrix; row order matches a
/// row-major [C, kh, kw] kernel slice.
template <typename Scalar>
void im2col(const Scalar* input, const ConvGeometry& g, RowMatrix<Scalar>& cols) {
  cols.resize(g.patch_size(), g.out_pixels());
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* plane = input + c * g.in_h * g.in_w;
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        Scalar* row = cols.data() + ((c * g.kernel_h + ki) * g.kernel_w + kj) * g.out_pixels();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ki;
          Scalar* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + iy * g.in_w;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters (adds) columns back into the input layout.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const ConvGeometry& g, Scalar* input) {
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* plane = input + c * g.in_h * g.in_w;
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        const Scalar* row =
            cols.data() + ((c * g.kernel_h + ki) * g.kernel_w + kj) * g.out_pixels();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.in_h) continue;
          const Scalar* src = row + oy * g.out_w;
          Scalar* dst = plane + iy * g.in_w;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace seqpatch
