#pragma once

#include "seqpatch/geometry.hpp"

#include <Eigen/Core>

namespace seqpatch {

/// Per-pixel visited mask. Bits only ever go from 0 to 1.
class CoverageMask {
 public:
  CoverageMask() = default;
  CoverageMask(Index height, Index width) : bits_(Bits::Zero(height, width)) {}

  Index height() const { return bits_.rows(); }
  Index width() const { return bits_.cols(); }
  Index covered() const { return covered_; }
  bool at(Index row, Index col) const { return bits_(row, col) != 0; }

  /// Sets the footprint of `box` to 1; the part outside the image is ignored.
  void cover(const Box& box) {
    const Index r0 = std::max<Index>(box.top, 0), r1 = std::min(box.bottom(), height());
    const Index c0 = std::max<Index>(box.left, 0), c1 = std::min(box.right(), width());
    for (Index r = r0; r < r1; ++r)
      for (Index c = c0; c < c1; ++c)
        if (!bits_(r, c)) {
          bits_(r, c) = 1;
          ++covered_;
        }
  }

  /// covered / (H W), in [0, 1].
  double fraction() const {
    return bits_.size() ? static_cast<double>(covered_) / static_cast<double>(bits_.size()) : 0.0;
  }

  friend bool operator==(const CoverageMask& a, const CoverageMask& b) {
    return a.bits_.rows() == b.bits_.rows() && a.bits_.cols() == b.bits_.cols() && (a.bits_ == b.bits_).all();
  }

 private:
  using Bits = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Bits bits_;
  Index covered_ = 0;
};

inline CoverageMask update_coverage(CoverageMask mask, const Box& box) {
  mask.cover(box);
  return mask;
}

}  // namespace seqpatch
