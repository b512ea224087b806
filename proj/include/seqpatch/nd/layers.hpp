#pragma once

#include "seqpatch/nd/ops.hpp"
#include "seqpatch/nd/params.hpp"

namespace seqpatch {

/// Affine layer registered in a ParameterSet: weight [out,in], bias [out].
struct LinearLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;

  template <typename Scalar>
  static LinearLayer add(ParameterSet<Scalar>& params, const std::string& prefix, Index in, Index out) {
    return {params.add(prefix + ".weight", {out, in}), params.add(prefix + ".bias", {out})};
  }

  template <typename Scalar>
  Var<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& x) const {
    return fully_connected(x, bind(weight), bind(bias));
  }
};

/// Convolution (or transposed convolution) with a per-channel bias.
struct ConvLayer {
  std::size_t kernel = 0;
  std::size_t bias = 0;
  Index stride = 1;
  Index pad = 0;
  Index output_pad = 0;
  bool transposed = false;

  template <typename Scalar>
  static ConvLayer add(ParameterSet<Scalar>& params, const std::string& prefix, Index in_c, Index out_c,
                       Index k, Index stride, bool transposed = false) {
    ConvLayer l;
    // Transposed kernels are stored [in, out, k, k].
    l.kernel = transposed ? params.add(prefix + ".kernel", {in_c, out_c, k, k})
                          : params.add(prefix + ".kernel", {out_c, in_c, k, k});
    l.bias = params.add(prefix + ".bias", {out_c});
    l.stride = stride;
    l.transposed = transposed;
    l.pad = k / 2;
    if (transposed) {
      // Trailing rows/cols so the output is exactly stride x the input extent.
      l.pad = (k - 1) / 2;
      l.output_pad = stride - k + 2 * l.pad;
      if (l.output_pad < 0 || l.output_pad >= stride)
        throw DimensionError("transposed layer " + prefix + " cannot scale exactly by its stride");
    }
    return l;
  }

  template <typename Scalar>
  Var<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& x) const {
    Var<Scalar> y = transposed ? deconv2d(x, bind(kernel), stride, pad, output_pad)
                               : conv2d(x, bind(kernel), stride, pad);
    return add_channel_bias(y, bind(bias));
  }
};

/// Gated recurrent unit:
///   r = sigmoid(W_xr x + W_hr h + b_r)
///   z = sigmoid(W_xz x + W_hz h + b_z)
///   n = tanh(W_xn x + b_xn + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
struct GruCell {
  LinearLayer xr, xz, xn;   // input projections carry the gate biases
  std::size_t hr = 0, hz = 0;
  LinearLayer hn;
  Index input_size = 0;
  Index hidden_size = 0;

  template <typename Scalar>
  static GruCell add(ParameterSet<Scalar>& params, const std::string& prefix, Index input, Index hidden) {
    GruCell g;
    g.input_size = input;
    g.hidden_size = hidden;
    g.xr = LinearLayer::add(params, prefix + ".reset_x", input, hidden);
    g.hr = params.add(prefix + ".reset_h.weight", {hidden, hidden});
    g.xz = LinearLayer::add(params, prefix + ".update_x", input, hidden);
    g.hz = params.add(prefix + ".update_h.weight", {hidden, hidden});
    g.xn = LinearLayer::add(params, prefix + ".candidate_x", input, hidden);
    g.hn = LinearLayer::add(params, prefix + ".candidate_h", hidden, hidden);
    return g;
  }

  template <typename Scalar>
  void init(ParameterSet<Scalar>& params, Rng& rng) const {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    for (std::size_t i : {xr.weight, xr.bias, hr, xz.weight, xz.bias, hz, xn.weight, xn.bias, hn.weight, hn.bias})
      fill_uniform(params[i], bound, rng);
  }

  template <typename Scalar>
  Var<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& x, const Var<Scalar>& h) const {
    if (x.size() != input_size || h.size() != hidden_size)
      throw DimensionError("gru_cell: got input " + to_string(x.shape()) + " and hidden " +
                           to_string(h.shape()) + ", expected [" + std::to_string(input_size) +
                           "] and [" + std::to_string(hidden_size) + "]");
    Var<Scalar> r = sigmoid(xr(bind, x) + matvec(bind(hr), h));
    Var<Scalar> z = sigmoid(xz(bind, x) + matvec(bind(hz), h));
    Var<Scalar> n = tanh(xn(bind, x) + r * hn(bind, h));
    return affine(z, Scalar(-1), Scalar(1)) * n + z * h;
  }
};

}  // namespace seqpatch
