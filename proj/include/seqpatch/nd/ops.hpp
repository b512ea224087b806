#pragma once

// Differentiable operations over Var handles. Every op records its result on the
// operands' tape together with a closure that pushes the result adjoint back to
// whichever operands need it.

#include "seqpatch/geometry.hpp"
#include "seqpatch/nd/kernels.hpp"
#include "seqpatch/nd/tape.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace seqpatch {

namespace detail {

template <typename Scalar>
Tape<Scalar>& same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape() != b.tape()) throw std::logic_error("operands live on different tapes");
  return *a.tape();
}

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

/// Element-wise map whose derivative is expressed through (input, output).
template <typename Scalar, typename Fwd, typename Deriv>
Var<Scalar> unary(const Var<Scalar>& x, Fwd fwd, Deriv deriv) {
  Tape<Scalar>& tape = *x.tape();
  const Tensor<Scalar>& in = x.value();
  Tensor<Scalar> out(in.shape);
  out.data = in.data.unaryExpr(fwd);
  return tape.record(std::move(out), {x}, [xi = x.id(), deriv](Tape<Scalar>& t, std::size_t self) {
    const auto& in_v = t.value(xi).data.array();
    const auto& out_v = t.value(self).data.array();
    t.adjoint(xi).array() += t.adjoint(self).array() * deriv(in_v, out_v);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolutions

/// Cross-correlation of a [C_in,H,W] input with a [C_out,C_in,k,k] kernel.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& kernel, Index stride, Index pad) {
  Tape<Scalar>& tape = detail::same_tape(x, kernel);
  const Tensor<Scalar>& in = x.value();
  const Tensor<Scalar>& k = kernel.value();
  if (in.rank() != 3 || k.rank() != 4) throw DimensionError("conv2d expects [C,H,W] and [O,C,k,k]");
  if (k.dim(1) != in.dim(0))
    throw DimensionError("conv2d: input has " + std::to_string(in.dim(0)) +
                         " channels, kernel expects " + std::to_string(k.dim(1)));
  const ConvGeometry g = conv_geometry(in.dim(0), in.dim(1), in.dim(2), k.dim(2), k.dim(3), stride, pad);
  const Index out_c = k.dim(0);

  RowMatrix<Scalar> cols;
  im2col(in.data.data(), g, cols);
  Tensor<Scalar> out({out_c, g.out_h, g.out_w});
  out.as_matrix(out_c, g.out_pixels()).noalias() = k.as_matrix(out_c, g.patch_size()) * cols;

  return tape.record(
      std::move(out), {x, kernel},
      [xi = x.id(), ki = kernel.id(), g, out_c, cols = std::move(cols)](Tape<Scalar>& t, std::size_t self) {
        Eigen::Map<const RowMatrix<Scalar>> dy(t.adjoint(self).data(), out_c, g.out_pixels());
        if (t.needs_grad(ki)) {
          Eigen::Map<RowMatrix<Scalar>> dk(t.adjoint(ki).data(), out_c, g.patch_size());
          dk.noalias() += dy * cols.transpose();
        }
        if (t.needs_grad(xi)) {
          Eigen::Map<const RowMatrix<Scalar>> km(t.value(ki).data.data(), out_c, g.patch_size());
          RowMatrix<Scalar> dcols = km.transpose() * dy;
          col2im(dcols, g, t.adjoint(xi).data());
        }
      });
}

/// Extent produced by deconv2d along one axis.
inline Index deconv_extent(Index in, Index kernel, Index stride, Index pad, Index output_pad) {
  return stride * (in - 1) + kernel - 2 * pad + output_pad;
}

/// Transposed convolution: the input-gradient of conv2d, run forward. `kernel` is
/// [C_in, C_out, k, k] where C_in matches this op's input channels, so conv2d and
/// deconv2d sharing a kernel are adjoint. `output_pad` (< stride) appends trailing
/// rows/columns so that stride-2, k=3, pad=1 doubles the extent exactly.
template <typename Scalar>
Var<Scalar> deconv2d(const Var<Scalar>& x, const Var<Scalar>& kernel, Index stride, Index pad,
                     Index output_pad = 0) {
  Tape<Scalar>& tape = detail::same_tape(x, kernel);
  const Tensor<Scalar>& in = x.value();
  const Tensor<Scalar>& k = kernel.value();
  if (in.rank() != 3 || k.rank() != 4) throw DimensionError("deconv2d expects [C,H,W] and [C,O,k,k]");
  if (k.dim(0) != in.dim(0))
    throw DimensionError("deconv2d: input has " + std::to_string(in.dim(0)) +
                         " channels, kernel expects " + std::to_string(k.dim(0)));
  if (stride < 1 || output_pad < 0 || output_pad >= stride)
    throw DimensionError("deconv2d: output padding must lie in [0, stride)");
  const Index in_c = in.dim(0);
  const Index out_c = k.dim(1);
  const Index out_h = deconv_extent(in.dim(1), k.dim(2), stride, pad, output_pad);
  const Index out_w = deconv_extent(in.dim(2), k.dim(3), stride, pad, output_pad);
  if (out_h < 1 || out_w < 1) throw DimensionError("deconv2d: empty output");
  // Geometry of the conv2d this op is the adjoint of.
  const ConvGeometry g = conv_geometry(out_c, out_h, out_w, k.dim(2), k.dim(3), stride, pad);

  Eigen::Map<const RowMatrix<Scalar>> km(k.data.data(), in_c, g.patch_size());
  Eigen::Map<const RowMatrix<Scalar>> ym(in.data.data(), in_c, g.out_pixels());
  RowMatrix<Scalar> cols = km.transpose() * ym;
  Tensor<Scalar> out({out_c, out_h, out_w});
  col2im(cols, g, out.data.data());

  return tape.record(std::move(out), {x, kernel}, [xi = x.id(), ki = kernel.id(), g, in_c](Tape<Scalar>& t, std::size_t self) {
    RowMatrix<Scalar> dcols;
    im2col(t.adjoint(self).data(), g, dcols);
    if (t.needs_grad(xi)) {
      Eigen::Map<const RowMatrix<Scalar>> kmat(t.value(ki).data.data(), in_c, g.patch_size());
      Eigen::Map<RowMatrix<Scalar>> dx(t.adjoint(xi).data(), in_c, g.out_pixels());
      dx.noalias() += kmat * dcols;
    }
    if (t.needs_grad(ki)) {
      Eigen::Map<const RowMatrix<Scalar>> y(t.value(xi).data.data(), in_c, g.out_pixels());
      Eigen::Map<RowMatrix<Scalar>> dk(t.adjoint(ki).data(), in_c, g.patch_size());
      dk.noalias() += y * dcols.transpose();
    }
  });
}

/// Adds a per-channel bias to a [C,H,W] tensor.
template <typename Scalar>
Var<Scalar> add_channel_bias(const Var<Scalar>& x, const Var<Scalar>& bias) {
  Tape<Scalar>& tape = detail::same_tape(x, bias);
  const Tensor<Scalar>& in = x.value();
  if (in.rank() != 3 || bias.value().rank() != 1 || bias.value().dim(0) != in.dim(0))
    throw DimensionError("add_channel_bias: bias " + to_string(bias.shape()) + " vs input " +
                         to_string(in.shape));
  const Index c = in.dim(0), hw = in.dim(1) * in.dim(2);
  Tensor<Scalar> out = in;
  out.requires_grad = false;
  out.grad.resize(0);
  out.as_matrix(c, hw).colwise() += bias.value().data;
  return tape.record(std::move(out), {x, bias}, [xi = x.id(), bi = bias.id(), c, hw](Tape<Scalar>& t, std::size_t self) {
    const auto& dy = t.adjoint(self);
    if (t.needs_grad(xi)) t.adjoint(xi) += dy;
    if (t.needs_grad(bi))
      t.adjoint(bi) += Eigen::Map<const RowMatrix<Scalar>>(dy.data(), c, hw).rowwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Dense layers

/// y = W x (W is [M,N], x is [N]).
template <typename Scalar>
Var<Scalar> matvec(const Var<Scalar>& weight, const Var<Scalar>& x) {
  Tape<Scalar>& tape = detail::same_tape(weight, x);
  const Tensor<Scalar>& w = weight.value();
  if (w.rank() != 2 || x.value().rank() != 1 || w.dim(1) != x.value().dim(0))
    throw DimensionError("fully_connected: weight " + to_string(w.shape) + " vs input " +
                         to_string(x.shape()));
  const Index m = w.dim(0), n = w.dim(1);
  Tensor<Scalar> out({m});
  out.data.noalias() = w.as_matrix(m, n) * x.value().data;
  return tape.record(std::move(out), {weight, x}, [wi = weight.id(), xi = x.id(), m, n](Tape<Scalar>& t, std::size_t self) {
    const auto& dy = t.adjoint(self);
    if (t.needs_grad(wi)) {
      Eigen::Map<RowMatrix<Scalar>> dw(t.adjoint(wi).data(), m, n);
      dw.noalias() += dy * t.value(xi).data.transpose();
    }
    if (t.needs_grad(xi)) {
      Eigen::Map<const RowMatrix<Scalar>> wm(t.value(wi).data.data(), m, n);
      t.adjoint(xi).noalias() += wm.transpose() * dy;
    }
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tape<Scalar>& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  Tensor<Scalar> out(a.shape(), a.value().data + b.value().data);
  return tape.record(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape<Scalar>& t, std::size_t self) {
    if (t.needs_grad(ai)) t.adjoint(ai) += t.adjoint(self);
    if (t.needs_grad(bi)) t.adjoint(bi) += t.adjoint(self);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tape<Scalar>& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  Tensor<Scalar> out(a.shape(), a.value().data - b.value().data);
  return tape.record(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape<Scalar>& t, std::size_t self) {
    if (t.needs_grad(ai)) t.adjoint(ai) += t.adjoint(self);
    if (t.needs_grad(bi)) t.adjoint(bi) -= t.adjoint(self);
  });
}

/// Element-wise (Hadamard) product.
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tape<Scalar>& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "mul");
  Tensor<Scalar> out(a.shape(), a.value().data.cwiseProduct(b.value().data));
  return tape.record(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape<Scalar>& t, std::size_t self) {
    const auto& dy = t.adjoint(self);
    if (t.needs_grad(ai)) t.adjoint(ai) += dy.cwiseProduct(t.value(bi).data);
    if (t.needs_grad(bi)) t.adjoint(bi) += dy.cwiseProduct(t.value(ai).data);
  });
}

/// y = scale * x + offset, element-wise.
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, Scalar scale, Scalar offset = Scalar(0)) {
  Tensor<Scalar> out(x.shape(), (x.value().data.array() * scale + offset).matrix());
  return x.tape()->record(std::move(out), {x}, [xi = x.id(), scale](Tape<Scalar>& t, std::size_t self) {
    t.adjoint(xi) += scale * t.adjoint(self);
  });
}

/// Affine map W x + b.
template <typename Scalar>
Var<Scalar> fully_connected(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  Var<Scalar> wx = matvec(weight, x);
  if (bias.value().shape != wx.shape())
    throw DimensionError("fully_connected: bias " + to_string(bias.shape()) + " vs output " +
                         to_string(wx.shape()));
  return wx + bias;
}

// ---------------------------------------------------------------------------
// Element-wise nonlinearities

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  return detail::unary(
      x, [slope](Scalar v) { return v > 0 ? v : slope * v; },
      [slope](const auto& in, const auto&) {
        return (in > Scalar(0)).template cast<Scalar>() * (Scalar(1) - slope) + slope;
      });
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar v) {
  if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
  const Scalar e = std::exp(v);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return stable_sigmoid(v); },
      [](const auto&, const auto& out) { return out * (Scalar(1) - out); });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::tanh(v); },
      [](const auto&, const auto& out) { return Scalar(1) - out * out; });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::exp(v); }, [](const auto&, const auto& out) { return out; });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::log(v); },
      [](const auto& in, const auto&) { return in.inverse(); });
}

// ---------------------------------------------------------------------------
// Shape plumbing

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  if (element_count(shape) != x.size())
    throw DimensionError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  Tensor<Scalar> out(std::move(shape), x.value().data);
  return x.tape()->record(std::move(out), {x}, [xi = x.id()](Tape<Scalar>& t, std::size_t self) {
    t.adjoint(xi) += t.adjoint(self);
  });
}

/// Concatenation along axis 0; trailing extents must agree.
template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  Tape<Scalar>& tape = *parts.front().tape();
  Shape shape = parts.front().shape();
  if (shape.empty()) throw DimensionError("concat needs rank >= 1");
  Index lead = 0, total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (p.tape() != &tape || s.size() != shape.size() ||
        !std::equal(s.begin() + 1, s.end(), shape.begin() + 1))
      throw DimensionError("concat: incompatible part " + to_string(s));
    lead += s[0];
    total += p.size();
  }
  shape[0] = lead;
  Tensor<Scalar> out(shape);
  std::vector<std::pair<std::size_t, Index>> spans;
  Index offset = 0;
  for (const auto& p : parts) {
    out.data.segment(offset, p.size()) = p.value().data;
    spans.emplace_back(p.id(), offset);
    offset += p.size();
  }
  return tape.record(std::move(out), parts, [spans](Tape<Scalar>& t, std::size_t self) {
    for (const auto& [id, off] : spans)
      if (t.needs_grad(id)) t.adjoint(id) += t.adjoint(self).segment(off, t.value(id).size());
  });
}

/// Contiguous sub-range of a rank-1 tensor.
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, Index offset, Index length) {
  if (x.value().rank() != 1 || offset < 0 || offset + length > x.size())
    throw DimensionError("slice out of range");
  Tensor<Scalar> out({length}, x.value().data.segment(offset, length));
  return x.tape()->record(std::move(out), {x}, [xi = x.id(), offset, length](Tape<Scalar>& t, std::size_t self) {
    t.adjoint(xi).segment(offset, length) += t.adjoint(self);
  });
}

/// Single element as a [1] tensor.
template <typename Scalar>
Var<Scalar> pick(const Var<Scalar>& x, Index index) {
  if (index < 0 || index >= x.size()) throw DimensionError("pick index out of range");
  return slice(reshape(x, {x.size()}), index, 1);
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out({1});
  out.data[0] = x.value().data.sum();
  return x.tape()->record(std::move(out), {x}, [xi = x.id()](Tape<Scalar>& t, std::size_t self) {
    t.adjoint(xi).array() += t.adjoint(self)[0];
  });
}

// ---------------------------------------------------------------------------
// Categorical heads

/// Softmax over a rank-1 tensor with max-subtraction.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& logits) {
  const auto& z = logits.value().data;
  if (logits.value().rank() != 1 || z.size() < 1) throw DimensionError("softmax expects a non-empty vector");
  Vector<Scalar> e = (z.array() - z.maxCoeff()).exp().matrix();
  Tensor<Scalar> out({z.size()}, e / e.sum());
  return logits.tape()->record(std::move(out), {logits}, [zi = logits.id()](Tape<Scalar>& t, std::size_t self) {
    const auto& p = t.value(self).data;
    const auto& dy = t.adjoint(self);
    const Scalar inner = dy.dot(p);
    t.adjoint(zi).array() += p.array() * (dy.array() - inner);
  });
}

template <typename Scalar>
Var<Scalar> log_softmax(const Var<Scalar>& logits) {
  const auto& z = logits.value().data;
  if (logits.value().rank() != 1 || z.size() < 1) throw DimensionError("log_softmax expects a non-empty vector");
  const Scalar m = z.maxCoeff();
  const Scalar lse = m + std::log((z.array() - m).exp().sum());
  Tensor<Scalar> out({z.size()}, (z.array() - lse).matrix());
  return logits.tape()->record(std::move(out), {logits}, [zi = logits.id()](Tape<Scalar>& t, std::size_t self) {
    const auto& dy = t.adjoint(self);
    const auto p = t.value(self).data.array().exp();
    t.adjoint(zi).array() += dy.array() - p * dy.sum();
  });
}

// ---------------------------------------------------------------------------
// Losses

/// Mean of (pred - target)^2 over the pixels of `box`; pred and target are [1,H,W]
/// or [H,W].
template <typename Scalar>
Var<Scalar> masked_mse(const Var<Scalar>& pred, const Tensor<Scalar>& target, const Box& box) {
  const Tensor<Scalar>& p = pred.value();
  if (p.shape != target.shape) throw DimensionError("masked_mse: prediction and target shapes differ");
  const Index h = p.shape[p.rank() - 2], w = p.shape[p.rank() - 1];
  if (p.size() != h * w) throw DimensionError("masked_mse expects a single plane");
  if (!box.fits(h, w)) throw DimensionError("masked_mse: box outside the plane");
  Eigen::Map<const RowMatrix<Scalar>> pm(p.data.data(), h, w), tm(target.data.data(), h, w);
  RowMatrix<Scalar> diff = pm.block(box.top, box.left, box.height, box.width) -
                           tm.block(box.top, box.left, box.height, box.width);
  const Scalar n = static_cast<Scalar>(box.area());
  Tensor<Scalar> out({1});
  out.data[0] = diff.squaredNorm() / n;
  return pred.tape()->record(std::move(out), {pred}, [pi = pred.id(), diff = std::move(diff), box, h, w, n](Tape<Scalar>& t, std::size_t self) {
    Eigen::Map<RowMatrix<Scalar>> dp(t.adjoint(pi).data(), h, w);
    dp.block(box.top, box.left, box.height, box.width) += (Scalar(2) * t.adjoint(self)[0] / n) * diff;
  });
}

}  // namespace seqpatch
