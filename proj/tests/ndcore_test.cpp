#include "doctest.h"

#include "seqpatch/nd/adam.hpp"
#include "seqpatch/nd/checkpoint.hpp"
#include "seqpatch/nd/gradcheck.hpp"
#include "seqpatch/nd/layers.hpp"

#include <filesystem>

using namespace seqpatch;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  fill_uniform(t, scale, rng);
  return t;
}

// Direct six-loop cross-correlation.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& k, Index stride, Index pad) {
  const Index C = x.dim(0), H = x.dim(1), W = x.dim(2), O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const Index OH = (H + 2 * pad - kh) / stride + 1, OW = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> y({O, OH, OW});
  for (Index o = 0; o < O; ++o)
    for (Index oy = 0; oy < OH; ++oy)
      for (Index ox = 0; ox < OW; ++ox) {
        double acc = 0;
        for (Index c = 0; c < C; ++c)
          for (Index i = 0; i < kh; ++i)
            for (Index j = 0; j < kw; ++j) {
              const Index iy = oy * stride - pad + i, ix = ox * stride - pad + j;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x.data[(c * H + iy) * W + ix] * k.data[((o * C + c) * kh + i) * kw + j];
            }
        y.data[(o * OH + oy) * OW + ox] = acc;
      }
  return y;
}

// Scatter-accumulate transposed convolution.
Tensor<double> deconv_oracle(const Tensor<double>& x, const Tensor<double>& k, Index stride, Index pad,
                             Index output_pad) {
  const Index C = x.dim(0), H = x.dim(1), W = x.dim(2), O = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const Index OH = stride * (H - 1) + kh - 2 * pad + output_pad;
  const Index OW = stride * (W - 1) + kw - 2 * pad + output_pad;
  Tensor<double> y({O, OH, OW});
  for (Index c = 0; c < C; ++c)
    for (Index iy = 0; iy < H; ++iy)
      for (Index ix = 0; ix < W; ++ix)
        for (Index o = 0; o < O; ++o)
          for (Index i = 0; i < kh; ++i)
            for (Index j = 0; j < kw; ++j) {
              const Index oy = iy * stride - pad + i, ox = ix * stride - pad + j;
              if (oy < 0 || oy >= OH || ox < 0 || ox >= OW) continue;
              y.data[(o * OH + oy) * OW + ox] +=
                  x.data[(c * H + iy) * W + ix] * k.data[((c * O + o) * kh + i) * kw + j];
            }
  return y;
}

double scalar_sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("conv2d matches hand cases and the direct-loop oracle") {
  Tape<double> tape;
  SUBCASE("identity kernel") {
    Rng rng(1);
    auto x = random_tensor({1, 3, 3}, rng);
    auto y = conv2d(tape.constant(x), tape.constant(Tensor<double>::constant({1, 1, 1, 1}, 1.0)), 1, 0);
    CHECK(y.shape() == Shape{1, 3, 3});
    CHECK(y.value().data == x.data);
  }
  SUBCASE("window sum") {
    auto y = conv2d(tape.constant(Tensor<double>::constant({1, 4, 4}, 1.0)),
                    tape.constant(Tensor<double>::constant({1, 1, 2, 2}, 1.0)), 2, 0);
    CHECK(y.shape() == Shape{1, 2, 2});
    for (Index i = 0; i < 4; ++i) CHECK(y.value().data[i] == 4.0);
  }
  SUBCASE("random against oracle") {
    Rng rng(7);
    for (auto [stride, pad] : {std::pair<Index, Index>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
      auto x = random_tensor({2, 8, 8}, rng);
      auto k = random_tensor({4, 2, 3, 3}, rng);
      auto y = conv2d(tape.constant(x), tape.constant(k), stride, pad);
      auto ref = conv_oracle(x, k, stride, pad);
      REQUIRE(y.shape() == ref.shape);
      CHECK((y.value().data - ref.data).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("channel mismatch is a dimension error") {
    CHECK_THROWS_AS(conv2d(tape.constant(Tensor<double>({3, 4, 4})), tape.constant(Tensor<double>({1, 2, 3, 3})), 1, 1),
                    DimensionError);
  }
  SUBCASE("kernel larger than padded input") {
    CHECK_THROWS_AS(conv2d(tape.constant(Tensor<double>({1, 2, 2})), tape.constant(Tensor<double>({1, 1, 5, 5})), 1, 0),
                    DimensionError);
  }
}

TEST_CASE("deconv2d matches hand cases and the scatter oracle") {
  Tape<double> tape;
  SUBCASE("non-overlapping stride copies blocks") {
    Tensor<double> x({1, 2, 2});
    x.data << 1, 2, 3, 4;
    auto y = deconv2d(tape.constant(x), tape.constant(Tensor<double>::constant({1, 1, 2, 2}, 1.0)), 2, 0);
    REQUIRE(y.shape() == Shape{1, 4, 4});
    for (Index r = 0; r < 4; ++r)
      for (Index c = 0; c < 4; ++c) CHECK(y.value().data[r * 4 + c] == x.data[(r / 2) * 2 + c / 2]);
  }
  SUBCASE("identity kernel") {
    Rng rng(3);
    auto x = random_tensor({1, 5, 4}, rng);
    auto y = deconv2d(tape.constant(x), tape.constant(Tensor<double>::constant({1, 1, 1, 1}, 1.0)), 1, 0);
    CHECK(y.value().data == x.data);
  }
  SUBCASE("random against oracle") {
    Rng rng(11);
    for (auto [stride, pad, opad] : {std::tuple<Index, Index, Index>{1, 1, 0}, {2, 1, 1}, {2, 0, 0}, {2, 1, 0}}) {
      auto x = random_tensor({3, 5, 6}, rng);
      auto k = random_tensor({3, 2, 3, 3}, rng);
      auto y = deconv2d(tape.constant(x), tape.constant(k), stride, pad, opad);
      auto ref = deconv_oracle(x, k, stride, pad, opad);
      REQUIRE(y.shape() == ref.shape);
      CHECK((y.value().data - ref.data).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(deconv2d(tape.constant(Tensor<double>({2, 3, 3})), tape.constant(Tensor<double>({3, 1, 3, 3})), 2, 1, 1),
                    DimensionError);
  }
}

TEST_CASE("conv2d and deconv2d are adjoint") {
  Rng rng(21);
  int exercised = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index c = 1 + static_cast<Index>(uniform01(rng) * 3), o = 1 + static_cast<Index>(uniform01(rng) * 3);
    const Index k = 1 + static_cast<Index>(uniform01(rng) * 4);
    const Index stride = 1 + static_cast<Index>(uniform01(rng) * 2);
    const Index pad = static_cast<Index>(uniform01(rng) * (k / 2 + 1));
    const Index in_h = k + static_cast<Index>(uniform01(rng) * 6), in_w = k + static_cast<Index>(uniform01(rng) * 6);
    const ConvGeometry g = conv_geometry(c, in_h, in_w, k, k, stride, pad);
    // Only sizes the transposed op can reproduce exactly.
    const Index opad_h = in_h - deconv_extent(g.out_h, k, stride, pad, 0);
    const Index opad_w = in_w - deconv_extent(g.out_w, k, stride, pad, 0);
    if (opad_h != opad_w || opad_h < 0 || opad_h >= stride) continue;

    Tape<double> tape;
    auto x = random_tensor({c, in_h, in_w}, rng);
    auto kern = random_tensor({o, c, k, k}, rng);
    auto y = random_tensor({o, g.out_h, g.out_w}, rng);
    auto kx = conv2d(tape.constant(x), tape.constant(kern), stride, pad);
    auto ky = deconv2d(tape.constant(y), tape.constant(kern), stride, pad, opad_h);
    REQUIRE(ky.shape() == x.shape);
    CHECK(std::abs(kx.value().data.dot(y.data) - x.data.dot(ky.value().data)) < 1e-10);
    ++exercised;
  }
  CHECK(exercised >= 50);
}

TEST_CASE("fully_connected") {
  Tape<double> tape;
  Rng rng(5);
  auto x = random_tensor({4}, rng);
  SUBCASE("identity weight and zero bias") {
    Tensor<double> w({4, 4});
    w.as_matrix(4, 4).setIdentity();
    auto y = fully_connected(tape.constant(x), tape.constant(w), tape.constant(Tensor<double>({4})));
    CHECK(y.value().data == x.data);
  }
  SUBCASE("zero weight returns bias") {
    auto b = random_tensor({3}, rng);
    auto y = fully_connected(tape.constant(x), tape.constant(Tensor<double>({3, 4})), tape.constant(b));
    CHECK(y.value().data == b.data);
  }
  SUBCASE("loop oracle") {
    auto w = random_tensor({3, 4}, rng);
    auto b = random_tensor({3}, rng);
    auto y = fully_connected(tape.constant(x), tape.constant(w), tape.constant(b));
    for (Index m = 0; m < 3; ++m) {
      double acc = b.data[m];
      for (Index n = 0; n < 4; ++n) acc += w.data[m * 4 + n] * x.data[n];
      CHECK(std::abs(y.value().data[m] - acc) < 1e-12);
    }
  }
  SUBCASE("mismatch") {
    CHECK_THROWS_AS(fully_connected(tape.constant(x), tape.constant(Tensor<double>({3, 5})), tape.constant(Tensor<double>({3}))),
                    DimensionError);
  }
}

TEST_CASE("gru_cell") {
  ParameterSet<double> params;
  const Index n = 5, m = 4;
  GruCell cell = GruCell::add(params, "gru", n, m);

  SUBCASE("zero parameters and inputs give a zero state") {
    Tape<double> tape;
    Binder<double> bind(tape, params);
    auto h = cell(bind, tape.constant(Tensor<double>({n})), tape.constant(Tensor<double>({m})));
    CHECK(h.value().data.isZero(0.0));
  }

  Rng rng(9);
  cell.init(params, rng);
  auto x = random_tensor({n}, rng);
  auto h0 = random_tensor({m}, rng);

  SUBCASE("scalar formula oracle") {
    Tape<double> tape;
    Binder<double> bind(tape, params);
    auto h = cell(bind, tape.constant(x), tape.constant(h0));
    auto W = [&](const std::string& name, Index i, Index j, Index cols) {
      return params.find(name)->data[i * cols + j];
    };
    auto B = [&](const std::string& name, Index i) { return params.find(name)->data[i]; };
    for (Index i = 0; i < m; ++i) {
      double ar = B("gru.reset_x.bias", i), az = B("gru.update_x.bias", i), an = B("gru.candidate_x.bias", i);
      double hn = B("gru.candidate_h.bias", i);
      for (Index j = 0; j < n; ++j) {
        ar += W("gru.reset_x.weight", i, j, n) * x.data[j];
        az += W("gru.update_x.weight", i, j, n) * x.data[j];
        an += W("gru.candidate_x.weight", i, j, n) * x.data[j];
      }
      for (Index j = 0; j < m; ++j) {
        ar += W("gru.reset_h.weight", i, j, m) * h0.data[j];
        az += W("gru.update_h.weight", i, j, m) * h0.data[j];
        hn += W("gru.candidate_h.weight", i, j, m) * h0.data[j];
      }
      const double r = scalar_sigmoid(ar), z = scalar_sigmoid(az);
      const double cand = std::tanh(an + r * hn);
      CHECK(std::abs(h.value().data[i] - ((1 - z) * cand + z * h0.data[i])) < 1e-12);
    }
  }

  SUBCASE("gradients agree with central differences") {
    Tensor<double> xt = x, ht = h0;
    auto result = finite_diff_check(params, [&](const Binder<double>& bind) {
      auto& t = bind.tape();
      return sum(cell(bind, t.constant(xt), t.constant(ht)));
    });
    CHECK(result.max_relative_error < 1e-5);
  }

  SUBCASE("gradients flow through input and hidden state") {
    ParameterSet<double> inputs;
    auto xi = inputs.add("x", {n});
    auto hi = inputs.add("h", {m});
    inputs[xi].data = x.data;
    inputs[hi].data = h0.data;
    auto result = finite_diff_check(inputs, [&](const Binder<double>& bind) {
      Binder<double> weights(bind.tape(), params);
      return sum(cell(weights, bind(xi), bind(hi)));
    });
    CHECK(result.max_relative_error < 1e-5);
  }

  SUBCASE("shape mismatch") {
    Tape<double> tape;
    Binder<double> bind(tape, params);
    CHECK_THROWS_AS(cell(bind, tape.constant(Tensor<double>({n + 1})), tape.constant(h0)), DimensionError);
  }
}

TEST_CASE("softmax") {
  Tape<double> tape;
  SUBCASE("uniform logits") {
    auto p = softmax(tape.constant(Tensor<double>::constant({5}, 0.3)));
    for (Index i = 0; i < 5; ++i) CHECK(p.value().data[i] == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("shift invariance and normalization") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      auto z = random_tensor({7}, rng, 5.0);
      Tensor<double> shifted(z.shape, (z.data.array() + 123.25).matrix());
      auto p = softmax(tape.constant(z));
      auto q = softmax(tape.constant(shifted));
      Index a = 0, b = 0;
      p.value().data.maxCoeff(&a);
      q.value().data.maxCoeff(&b);
      CHECK(a == b);
      CHECK((p.value().data - q.value().data).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(p.value().data.sum() - 1.0) < 1e-9);
      CHECK((p.value().data.array() > 0).all());
    }
  }
  SUBCASE("large logits do not overflow") {
    Tensor<double> z({2});
    z.data << 1000, 0;
    auto p = softmax(tape.constant(z));
    CHECK(p.value().all_finite());
    CHECK(p.value().data[0] == doctest::Approx(1.0));
    CHECK(p.value().data[1] < 1e-300);
  }
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  Rng rng(33);
  ParameterSet<double> p;
  auto a = p.add("a", {2, 5, 6});
  auto b = p.add("b", {2, 5, 6});
  auto k = p.add("k", {3, 2, 3, 3});
  auto kt = p.add("kt", {2, 3, 3, 3});
  auto cb = p.add("cb", {3});
  auto v = p.add("v", {6});
  auto w = p.add("w", {4, 6});
  auto bias = p.add("bias", {4});
  for (auto& e : p) fill_uniform(e.tensor, 1.0, rng);
  // keep log() away from zero
  p[v].data = p[v].data.cwiseAbs().array() + 0.5;

  auto check = [&](auto&& f) {
    auto r = finite_diff_check(p, f);
    CHECK(r.max_relative_error < 1e-5);
    return r;
  };
  check([&](const Binder<double>& q) { return sum(conv2d(q(a), q(k), 1, 1) * conv2d(q(b), q(k), 1, 1)); });
  check([&](const Binder<double>& q) { return sum(tanh(add_channel_bias(conv2d(q(a), q(k), 2, 1), q(cb)))); });
  check([&](const Binder<double>& q) {
    auto y = deconv2d(q(a), q(kt), 2, 1, 1);
    return sum(y * y);
  });
  check([&](const Binder<double>& q) { return sum(sigmoid(fully_connected(q(v), q(w), q(bias)))); });
  check([&](const Binder<double>& q) { return sum(leaky_relu(q(a) - q(b), 0.2) * q(b)); });
  check([&](const Binder<double>& q) { return sum(log(q(v)) + exp(affine(q(v), -0.5, 0.1))); });
  check([&](const Binder<double>& q) { return pick(log_softmax(q(v)), 2) + pick(softmax(q(v)), 4); });
  check([&](const Binder<double>& q) {
    auto joined = concat(std::vector<Var<double>>{q(a), q(b)});
    return sum(reshape(joined, {4 * 30}) * reshape(joined, {4 * 30}));
  });
  check([&](const Binder<double>& q) {
    Tensor<double> target({1, 5, 6});
    fill_uniform(target, 1.0, rng);
    target.data.setConstant(0.25);
    return masked_mse(reshape(slice(reshape(q(a), {60}), 0, 30), {1, 5, 6}), target, Box{1, 2, 3, 3});
  });
}

TEST_CASE("backward accumulates additively") {
  Rng rng(2);
  ParameterSet<double> p;
  auto k = p.add("k", {2, 1, 3, 3});
  fill_uniform(p[k], 1.0, rng);
  auto x = random_tensor({1, 6, 6}, rng);
  Gradients<double> g(p);
  Tape<double> tape;
  Binder<double> bind(tape, p, &g);
  auto out = sum(tanh(conv2d(tape.constant(x), bind(k), 1, 1)));
  tape.backward(out);
  const Vector<double> once = g[k];
  tape.backward(out);
  CHECK(g[k] == (2.0 * once));
}

TEST_CASE("finite_diff_check harness") {
  ParameterSet<double> p;
  auto i = p.add("w", {6});
  Rng rng(8);
  fill_uniform(p[i], 2.0, rng);
  auto squares = [&](const Binder<double>& q) { return sum(q(i) * q(i)); };
  SUBCASE("quadratic is exact up to roundoff") {
    CHECK(finite_diff_check(p, squares, {.step = 1e-5}).max_relative_error < 1e-9);
  }
  SUBCASE("corrupted gradient is flagged") {
    auto r = finite_diff_check(p, squares, {.step = 1e-5, .analytic_scale = 2.0});
    CHECK(r.max_relative_error == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  }
}

TEST_CASE("adam_step") {
  ParameterSet<double> p;
  auto w = p.add("w", {1});
  SUBCASE("zero gradient without weight decay leaves parameters alone") {
    p[w].data[0] = 0.7;
    OptimizerState<double> st(p, AdamConfig{.weight_decay = 0.0});
    Gradients<double> g(p);
    for (int i = 0; i < 5; ++i) adam_step(p, g, st);
    CHECK(p[w].data[0] == 0.7);
    CHECK(st.step == 5);
  }
  SUBCASE("single step matches the closed form") {
    p[w].data[0] = 0.7;
    AdamConfig cfg;
    OptimizerState<double> st(p, cfg);
    Gradients<double> g(p);
    g[w][0] = -0.3;
    adam_step(p, g, st);
    // m_hat = g, v_hat = g^2 after one bias-corrected step
    const double m = (1 - cfg.beta1) * -0.3, v = (1 - cfg.beta2) * 0.09;
    const double m_hat = m / (1 - cfg.beta1), v_hat = v / (1 - cfg.beta2);
    const double expected = 0.7 - cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * 0.7);
    CHECK(p[w].data[0] == expected);
  }
  SUBCASE("quadratic descent is monotone") {
    p[w].data[0] = 1.0;
    OptimizerState<double> st(p, AdamConfig{});
    Gradients<double> g(p);
    double prev = 1.0;
    for (int i = 0; i < 100; ++i) {
      g[w][0] = 2.0 * p[w].data[0];
      adam_step(p, g, st);
      CHECK(std::abs(p[w].data[0]) < prev);
      prev = std::abs(p[w].data[0]);
    }
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(12);
  ParameterSet<double> pd;
  ParameterSet<float> pf;
  auto a = pd.add("net.a", {3, 2});
  auto b = pf.add("net.b", {4});
  fill_uniform(pd[a], 1.0, rng);
  fill_uniform(pf[b], 1.0, rng);
  pd[a].data[0] = -0.0;
  pd[a].data[1] = std::numeric_limits<double>::denorm_min();

  Checkpoint c;
  c.step = 42;
  c.seed = 0xdeadbeefcafeull;
  c.set_meta("name", "ünïcode");
  store_parameters(c, "d.", pd);
  store_parameters(c, "f.", pf);
  const auto path = std::filesystem::temp_directory_path() / "seqpatch_ckpt_test.bin";
  c.save(path);
  Checkpoint back = Checkpoint::load(path);
  CHECK(back.step == 42);
  CHECK(back.seed == c.seed);
  CHECK(back.meta("name") == "ünïcode");
  CHECK(back.serialize() == c.serialize());

  ParameterSet<double> pd2;
  ParameterSet<float> pf2;
  pd2.add("net.a", {3, 2});
  pf2.add("net.b", {4});
  restore_parameters(back, "d.", pd2);
  restore_parameters(back, "f.", pf2);
  CHECK(pd2.checksum() == pd.checksum());
  CHECK(pf2.checksum() == pf.checksum());
  CHECK(std::signbit(pd2[0].data[0]));

  SUBCASE("truncated payload") {
    auto bytes = c.serialize();
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(Checkpoint::deserialize(bytes), CheckpointError);
  }
  SUBCASE("shape mismatch on restore") {
    ParameterSet<double> wrong;
    wrong.add("net.a", {2, 3});
    CHECK_THROWS_AS(restore_parameters(back, "d.", wrong), CheckpointError);
  }
  std::filesystem::remove(path);
}
