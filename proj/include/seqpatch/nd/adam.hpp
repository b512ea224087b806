#pragma once

#include "seqpatch/nd/params.hpp"

#include <cmath>

namespace seqpatch {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-7;
};

/// First/second moment accumulators for one ParameterSet.
template <typename Scalar>
struct OptimizerState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Vector<Scalar>> first_moment;
  std::vector<Vector<Scalar>> second_moment;

  OptimizerState() = default;
  OptimizerState(const ParameterSet<Scalar>& params, AdamConfig cfg) : config(cfg) {
    for (const auto& e : params) {
      first_moment.push_back(Vector<Scalar>::Zero(e.tensor.size()));
      second_moment.push_back(Vector<Scalar>::Zero(e.tensor.size()));
    }
  }
};

/// One bias-corrected ADAM update with decoupled weight decay:
///   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, const Gradients<Scalar>& grads, OptimizerState<Scalar>& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size())
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(c.beta1), b2 = static_cast<Scalar>(c.beta2);
  const Scalar correct1 = static_cast<Scalar>(1.0 - std::pow(c.beta1, t));
  const Scalar correct2 = static_cast<Scalar>(1.0 - std::pow(c.beta2, t));
  const Scalar lr = static_cast<Scalar>(c.learning_rate);
  const Scalar eps = static_cast<Scalar>(c.epsilon);
  const Scalar wd = static_cast<Scalar>(c.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].data;
    const auto& g = grads[i];
    if (g.size() != theta.size()) throw DimensionError("adam_step: gradient shape mismatch for " + params.name(i));
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    const auto m_hat = m.array() / correct1;
    const auto v_hat = v.array() / correct2;
    theta.array() -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * theta.array());
  }
}

}  // namespace seqpatch
