#include "seqpatch/policy/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqpatch {

void PolicyGeometry::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (image_h < 8 || image_w < 8) fail("image extent must be at least 8x8");
  if (grid_stride < 1) fail("grid_stride must be positive");
  if (!(box_base >= 1.0)) fail("box_base must be at least 1 pixel");
  if (ratios.empty()) fail("ratios must not be empty");
  if (scales.empty()) fail("scales must not be empty");
  for (double r : ratios)
    if (!(r > 0)) fail("ratios must be positive");
  for (double s : scales)
    if (!(s > 0)) fail("scales must be positive");
  if (policy_input < 16) fail("policy_input must be at least 16");
  if (feature_dim < 1 || history_dim < 1 || hidden_dim < 1) fail("network widths must be positive");
}

BoxExtent decode_box(double ratio, double scale, double box_base, Index image_h, Index image_w) {
  const double lh = box_base * scale;
  const double lw = lh / ratio * scale;
  auto fit = [](double v, Index extent) {
    return std::clamp<Index>(static_cast<Index>(std::llround(v)), 1, extent);
  };
  return {fit(lh, image_h), fit(lw, image_w)};
}

BoxExtent decode_box(const PolicyGeometry& g, Index ratio_id, Index scale_id) {
  if (ratio_id < 0 || ratio_id >= g.ratio_count() || scale_id < 0 || scale_id >= g.scale_count())
    throw std::out_of_range("decode_box: ratio/scale id out of range");
  return decode_box(g.ratios[static_cast<std::size_t>(ratio_id)], g.scales[static_cast<std::size_t>(scale_id)],
                    g.box_base, g.image_h, g.image_w);
}

Action make_action(const PolicyGeometry& g, Index gx, Index gy, Index ratio_id, Index scale_id) {
  if (gx < 0 || gx >= g.grid_x() || gy < 0 || gy >= g.grid_y())
    throw std::out_of_range("make_action: grid cell out of range");
  const BoxExtent e = decode_box(g, ratio_id, scale_id);
  Action a;
  a.grid_x = gx;
  a.grid_y = gy;
  a.x = g.grid_center(gx, g.image_w) + 1;
  a.y = g.grid_center(gy, g.image_h) + 1;
  a.ratio_id = ratio_id;
  a.scale_id = scale_id;
  a.box_h = e.height;
  a.box_w = e.width;
  return a;
}

Box clamp_box(Index center_y, Index center_x, Index box_h, Index box_w, Index image_h, Index image_w) {
  Box b;
  b.height = std::clamp<Index>(box_h, 1, image_h);
  b.width = std::clamp<Index>(box_w, 1, image_w);
  b.top = std::clamp<Index>(center_y - 1 - b.height / 2, 0, image_h - b.height);
  b.left = std::clamp<Index>(center_x - 1 - b.width / 2, 0, image_w - b.width);
  return b;
}

Box action_box(const Action& a, Index image_h, Index image_w) {
  return clamp_box(a.y, a.x, a.box_h, a.box_w, image_h, image_w);
}

std::vector<double> action_features(const PolicyGeometry& g, const Action& a) {
  auto frac = [](Index id, Index count) {
    return count > 1 ? static_cast<double>(id) / static_cast<double>(count - 1) : 0.0;
  };
  return {static_cast<double>(a.x) / static_cast<double>(g.image_w),
          static_cast<double>(a.y) / static_cast<double>(g.image_h), frac(a.ratio_id, g.ratio_count()),
          frac(a.scale_id, g.scale_count())};
}

Index find_entry(const std::vector<double>& table, double value) {
  for (std::size_t i = 0; i < table.size(); ++i)
    if (std::abs(table[i] - value) < 1e-12) return static_cast<Index>(i);
  return -1;
}

}  // namespace seqpatch
