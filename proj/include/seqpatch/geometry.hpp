#pragma once

#include "seqpatch/nd/tensor.hpp"

namespace seqpatch {

/// Axis-aligned pixel rectangle, 0-based, half-open on the far edges.
struct Box {
  Index top = 0;
  Index left = 0;
  Index height = 0;
  Index width = 0;

  Index area() const { return height * width; }
  Index bottom() const { return top + height; }
  Index right() const { return left + width; }
  bool contains(Index row, Index col) const {
    return row >= top && row < bottom() && col >= left && col < right();
  }
  bool fits(Index image_h, Index image_w) const {
    return top >= 0 && left >= 0 && height >= 1 && width >= 1 && bottom() <= image_h &&
           right() <= image_w;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

}  // namespace seqpatch
