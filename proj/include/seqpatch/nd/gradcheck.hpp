#pragma once

#include "seqpatch/nd/params.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace seqpatch {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates probed per parameter tensor; 0 probes every coordinate.
  std::size_t coordinates_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Multiplies the analytic gradient before comparison (canary for the harness itself).
  double analytic_scale = 1.0;
  /// Tries steps 100h, 10h, h, h/10 and keeps the largest whose central difference
  /// agrees with the next smaller one. Large steps beat 64-bit roundoff on
  /// coordinates with small gradients; the agreement test falls back to small
  /// steps where a rectifier kink lies inside the larger stencil.
  bool adaptive_step = false;
};

namespace detail {

template <typename Central>
double cascade_derivative(Central&& central, double step, double value_scale) {
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  const double steps[4] = {100 * step, 10 * step, step, step / 10};
  double prev = central(steps[0]);
  for (int k = 1; k < 4; ++k) {
    const double next = central(steps[k]);
    const double noise = 8.0 * kEps * value_scale / steps[k];
    if (std::abs(prev - next) <= noise + 1e-7 * std::abs(next)) return prev;
    prev = next;
  }
  return central(step);
}

}  // namespace detail

/// Compares reverse-mode gradients of a scalar objective against central differences.
/// `objective(Binder&)` must record a one-element Var. Returns the maximum of
///   |analytic - numeric| / (|analytic| + |numeric| + 1e-12)
/// over the probed coordinates.
template <typename Scalar, typename Objective>
GradCheckResult finite_diff_check(ParameterSet<Scalar>& params, Objective&& objective,
                                  const GradCheckOptions& options = {}) {
  Gradients<Scalar> analytic(params);
  {
    Tape<Scalar> tape;
    Binder<Scalar> bind(tape, params, &analytic);
    Var<Scalar> out = objective(bind);
    if (out.size() != 1) throw DimensionError("finite_diff_check needs a scalar objective");
    tape.backward(out);
  }
  auto evaluate = [&]() -> double {
    Tape<Scalar> tape;
    Binder<Scalar> bind(tape, params);
    return static_cast<double>(objective(bind).value().data[0]);
  };

  const double base = evaluate();
  GradCheckResult result;
  Rng rng(options.seed);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<Scalar>& tensor = params[p];
    std::vector<Index> coords(static_cast<std::size_t>(tensor.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (options.coordinates_per_tensor && coords.size() > options.coordinates_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.coordinates_per_tensor);
    }
    for (Index j : coords) {
      const Scalar saved = tensor.data[j];
      auto central = [&](double h) {
        tensor.data[j] = static_cast<Scalar>(static_cast<double>(saved) + h);
        const double up = evaluate();
        tensor.data[j] = static_cast<Scalar>(static_cast<double>(saved) - h);
        const double down = evaluate();
        tensor.data[j] = saved;
        return (up - down) / (2.0 * h);
      };
      const double numeric = options.adaptive_step
                                 ? detail::cascade_derivative(central, options.step, std::abs(base) + 1.0)
                                 : central(options.step);
      const double exact = options.analytic_scale * static_cast<double>(analytic[p][j]);
      const double rel = std::abs(exact - numeric) / (std::abs(exact) + std::abs(numeric) + 1e-12);
      ++result.coordinates;
      if (rel > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = std::max(rel, result.max_relative_error);
        if (rel >= result.max_relative_error) {
          result.worst_parameter = params.name(p);
          result.worst_index = j;
          result.worst_analytic = exact;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace seqpatch
