#pragma once

#include "seqpatch/geometry.hpp"

#include <string>
#include <vector>

namespace seqpatch {

/// Everything that fixes the action space and the policy network sizes.
struct PolicyGeometry {
  Index image_h = 64;
  Index image_w = 64;
  Index grid_stride = 8;
  double box_base = 32.0;  // Z in pixels
  /// Height:width ratios. Ratio r decodes to L_w = L_h / r.
  std::vector<double> ratios{1.5, 1.0, 2.0 / 3.0};
  /// One scale index applies to both axes.
  std::vector<double> scales{0.75, 1.0, 1.25};
  Index policy_input = 64;
  Index feature_dim = 64;
  Index history_dim = 64;
  Index hidden_dim = 128;
  double leaky_slope = 0.2;

  Index grid_x() const { return (image_w + grid_stride - 1) / grid_stride; }
  Index grid_y() const { return (image_h + grid_stride - 1) / grid_stride; }
  Index ratio_count() const { return static_cast<Index>(ratios.size()); }
  Index scale_count() const { return static_cast<Index>(scales.size()); }
  Index action_count() const { return grid_x() * grid_y() * ratio_count() * scale_count(); }
  Index state_dim() const { return 2 * feature_dim + history_dim; }

  /// 0-based pixel coordinate of grid cell k along an axis of `extent` pixels.
  Index grid_center(Index k, Index extent) const {
    return std::min(extent - 1, k * grid_stride + grid_stride / 2);
  }

  /// Throws std::invalid_argument naming the first inconsistent field.
  void validate() const;
};

/// One policy decision. Centers are 1-based pixels. Grid ids are -1 for actions
/// that did not come from the grid (raster tiles).
struct Action {
  Index x = 1;
  Index y = 1;
  Index grid_x = -1;
  Index grid_y = -1;
  Index ratio_id = 0;
  Index scale_id = 0;
  Index box_h = 1;
  Index box_w = 1;

  friend bool operator==(const Action&, const Action&) = default;
};

struct BoxExtent {
  Index height = 0;
  Index width = 0;
  friend bool operator==(const BoxExtent&, const BoxExtent&) = default;
};

/// L_h = Z * s, L_w = (L_h / ratio) * s, each rounded to the nearest integer and
/// clamped to [1, extent].
BoxExtent decode_box(double ratio, double scale, double box_base, Index image_h, Index image_w);
BoxExtent decode_box(const PolicyGeometry& g, Index ratio_id, Index scale_id);

/// Action for grid cell (gx, gy) with the given ratio and scale ids.
Action make_action(const PolicyGeometry& g, Index gx, Index gy, Index ratio_id, Index scale_id);

/// Keeps the requested extent where possible (only shrinking to the image extent)
/// and shifts the box inward so it lies inside the image.
Box clamp_box(Index center_y, Index center_x, Index box_h, Index box_w, Index image_h, Index image_w);
Box action_box(const Action& a, Index image_h, Index image_w);

/// History embedding (x/W, y/H, ratio_id/(R-1), scale_id/(S-1)); a single-entry
/// table maps to 0.
std::vector<double> action_features(const PolicyGeometry& g, const Action& a);

/// Index of `value` in `table`, or -1.
Index find_entry(const std::vector<double>& table, double value);

}  // namespace seqpatch
