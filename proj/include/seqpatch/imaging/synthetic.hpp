#pragma once

#include "seqpatch/imaging/plane.hpp"

#include <cstdint>

namespace seqpatch {

/// Procedural texture: a random linear gradient overlaid with rectangles,
/// discs and a stripe band. Deterministic in `seed`.
ImagePlane synthetic_texture(std::uint64_t seed, Index height, Index width);

}  // namespace seqpatch
