#include "seqpatch/imaging/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace seqpatch {

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw ImageError(std::string("PGM ") + field + " is implausibly large");
      ++pos_;
    }
    if (pos_ == start) throw ImageError(std::string("malformed PGM header: missing ") + field);
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImagePlane decode_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw ImageError("malformed PGM header: expected magic P5");
  HeaderParser p(bytes.substr(2));
  const long width = p.number("width");
  const long height = p.number("height");
  const long maxval = p.number("maxval");
  if (width < 1 || height < 1) throw ImageError("malformed PGM header: empty image");
  if (maxval < 1 || maxval > 255) throw ImageError("unsupported PGM maxval " + std::to_string(maxval));
  std::size_t pos = p.pos() + 2;
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ImageError("malformed PGM header: missing separator before payload");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < n)
    throw ImageError("truncated PGM payload: expected " + std::to_string(n) + " bytes, found " +
                     std::to_string(bytes.size() - pos));
  ImagePlane img(height, width);
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = static_cast<unsigned char>(bytes[pos + i]);
    if (q > maxval) throw ImageError("PGM sample exceeds maxval");
    img.data()[i] = normalize_value(static_cast<double>(q) / static_cast<double>(maxval));
  }
  return img;
}

std::string encode_pgm(const ImagePlane& img) {
  std::string out = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(img.size()));
  for (Index i = 0; i < img.size(); ++i) {
    const double unit = std::clamp(denormalize_value(img.data()[i]), 0.0, 1.0);
    out[header + static_cast<std::size_t>(i)] = static_cast<char>(static_cast<unsigned char>(std::lround(unit * 255.0)));
  }
  return out;
}

ImagePlane load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const ImageError& e) {
    throw ImageError(path.string() + ": " + e.what());
  }
}

void save_image(const ImagePlane& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("write failed for " + path.string());
}

}  // namespace seqpatch
