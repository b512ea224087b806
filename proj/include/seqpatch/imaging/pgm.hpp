#pragma once

#include "seqpatch/imaging/plane.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace seqpatch {

/// Binary 8-bit graymap (P5). Sample q maps to q / maxval in [0,1], then to [-1,1].
ImagePlane decode_pgm(std::string_view bytes);
std::string encode_pgm(const ImagePlane& img);

ImagePlane load_image(const std::filesystem::path& path);
void save_image(const ImagePlane& img, const std::filesystem::path& path);

}  // namespace seqpatch
