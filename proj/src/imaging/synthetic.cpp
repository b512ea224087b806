#include "seqpatch/imaging/synthetic.hpp"

#include "seqpatch/nd/params.hpp"

#include <cmath>
#include <numbers>

namespace seqpatch {

ImagePlane synthetic_texture(std::uint64_t seed, Index height, Index width) {
  Rng rng(seed);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  const double h = static_cast<double>(height), w = static_cast<double>(width);

  // Smooth background gradient in [0,1].
  const double angle = u(0.0, 2.0 * std::numbers::pi);
  const double base = u(0.25, 0.6), slope = u(0.2, 0.5);
  ImagePlane unit(height, width);
  for (Index r = 0; r < height; ++r)
    for (Index c = 0; c < width; ++c) {
      const double t = (std::cos(angle) * (c / w - 0.5) + std::sin(angle) * (r / h - 0.5));
      unit(r, c) = base + slope * t;
    }

  // Stripe band.
  const double freq = u(3.0, 7.0), phase = u(0.0, 2.0 * std::numbers::pi);
  const double band_lo = u(0.0, 0.6) * h, band_hi = band_lo + u(0.2, 0.4) * h;
  const double stripe_amp = u(0.1, 0.2);
  for (Index r = 0; r < height; ++r) {
    if (r < band_lo || r > band_hi) continue;
    for (Index c = 0; c < width; ++c)
      unit(r, c) += stripe_amp * (std::sin(2.0 * std::numbers::pi * freq * c / w + phase) > 0 ? 1.0 : -1.0);
  }

  // Rectangles and discs with flat fills.
  const int shapes = 3 + static_cast<int>(u(0.0, 4.0));
  for (int s = 0; s < shapes; ++s) {
    const double value = u(0.0, 1.0);
    const double cy = u(0.0, h), cx = u(0.0, w);
    const double ry = u(0.08, 0.25) * h, rx = u(0.08, 0.25) * w;
    const bool disc = uniform01(rng) < 0.5;
    for (Index r = 0; r < height; ++r)
      for (Index c = 0; c < width; ++c) {
        const double dy = (r + 0.5 - cy) / ry, dx = (c + 0.5 - cx) / rx;
        const bool inside = disc ? (dx * dx + dy * dy <= 1.0) : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
        if (inside) unit(r, c) = value;
      }
  }
  return normalized(unit.cwiseMax(0.0).cwiseMin(1.0));
}

}  // namespace seqpatch
