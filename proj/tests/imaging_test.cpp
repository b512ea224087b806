#include "doctest.h"

#include "seqpatch/imaging/metrics.hpp"
#include "seqpatch/imaging/pgm.hpp"
#include "seqpatch/imaging/resample.hpp"
#include "seqpatch/imaging/synthetic.hpp"
#include "seqpatch/nd/params.hpp"

#include <filesystem>

using namespace seqpatch;

namespace {

ImagePlane random_plane(Index h, Index w, Rng& rng) {
  ImagePlane p(h, w);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = 2.0 * uniform01(rng) - 1.0;
  return p;
}

}  // namespace

TEST_CASE("bicubic_resize") {
  Rng rng(1);
  SUBCASE("constant stays constant") {
    ImagePlane c = ImagePlane::Constant(12, 9, 0.37);
    for (auto [h, w] : {std::pair<Index, Index>{24, 18}, {3, 3}, {12, 9}, {7, 31}}) {
      ImagePlane r = bicubic_resize(c, h, w);
      CHECK(r.rows() == h);
      CHECK(r.cols() == w);
      CHECK((r - 0.37).abs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("same size is the identity") {
    ImagePlane p = random_plane(10, 13, rng);
    CHECK((bicubic_resize(p, 10, 13) - p).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("linear ramp stays linear when upscaled") {
    ImagePlane ramp(16, 16);
    for (Index r = 0; r < 16; ++r)
      for (Index c = 0; c < 16; ++c) ramp(r, c) = -0.8 + 0.05 * c + 0.03 * r;
    ImagePlane up = bicubic_resize(ramp, 32, 32);
    for (Index r = 4; r < 28; ++r)
      for (Index c = 4; c < 28; ++c) {
        // half-pixel centers: output (r, c) samples source (r + 0.5) / 2 - 0.5
        const double sr = (r + 0.5) / 2.0 - 0.5, sc = (c + 0.5) / 2.0 - 0.5;
        CHECK(std::abs(up(r, c) - (-0.8 + 0.05 * sc + 0.03 * sr)) < 1e-6);
      }
  }
  SUBCASE("commutes with negation") {
    for (int trial = 0; trial < 20; ++trial) {
      ImagePlane p = random_plane(9 + trial % 5, 11, rng);
      ImagePlane a = bicubic_resize(ImagePlane(-p), 20, 7);
      ImagePlane b = bicubic_resize(p, 20, 7);
      CHECK((a + b).abs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("output is clipped to the normalized range") {
    ImagePlane p = random_plane(8, 8, rng).sign();
    ImagePlane up = bicubic_resize(p, 40, 40);
    CHECK(up.maxCoeff() <= 1.0);
    CHECK(up.minCoeff() >= -1.0);
  }
}

TEST_CASE("degrade") {
  SUBCASE("constant image") {
    ImagePlane lr = degrade(ImagePlane::Constant(32, 32, 0.25), 4);
    CHECK(lr.rows() == 8);
    CHECK((lr - 0.25).abs().maxCoeff() < 1e-12);
    CHECK((bicubic_resize(lr, 32, 32) - 0.25).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("round trip loses information") {
    ImagePlane hr = synthetic_texture(5, 64, 64);
    ImagePlane back = bicubic_resize(degrade(hr, 4), 64, 64);
    const double p = psnr(back, hr);
    CHECK(p < kPsnrCap);
    CHECK(p > 10.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(degrade(ImagePlane::Zero(30, 32), 4), ImageError);
    CHECK_THROWS_AS(degrade(ImagePlane::Zero(32, 32), 3), ImageError);
    CHECK(degrade(ImagePlane::Zero(32, 32), 16).rows() == 2);
  }
}

TEST_CASE("area_downsample averages blocks") {
  ImagePlane p(4, 8);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<double>(i) / 32.0;
  ImagePlane d = area_downsample(p, 4);
  REQUIRE(d.rows() == 1);
  REQUIRE(d.cols() == 2);
  CHECK(d(0, 0) == doctest::Approx(p.block(0, 0, 4, 4).mean()));
  CHECK(d(0, 1) == doctest::Approx(p.block(0, 4, 4, 4).mean()));
}

TEST_CASE("psnr") {
  Rng rng(2);
  SUBCASE("identical images hit the cap") {
    ImagePlane p = random_plane(16, 16, rng);
    CHECK(psnr(p, p) == kPsnrCap);
  }
  SUBCASE("uniform offset of 0.1 is 20 dB") {
    ImagePlane a = ImagePlane::Constant(12, 12, normalize_value(0.0));
    ImagePlane b = ImagePlane::Constant(12, 12, normalize_value(0.1));
    CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);
  }
  SUBCASE("matches a double-loop oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      ImagePlane a = random_plane(13, 17, rng), b = random_plane(13, 17, rng);
      double acc = 0;
      for (Index r = 0; r < 13; ++r)
        for (Index c = 0; c < 17; ++c) {
          const double d = (a(r, c) + 1) / 2 - (b(r, c) + 1) / 2;
          acc += d * d;
        }
      const double expected = 10.0 * std::log10(1.0 / (acc / (13 * 17)));
      CHECK(std::abs(psnr(a, b) - expected) < 1e-9);
      CHECK(psnr(a, b) == psnr(b, a));
    }
  }
  SUBCASE("strictly decreasing in the error") {
    ImagePlane base = random_plane(16, 16, rng) * 0.5;
    ImagePlane noise = random_plane(16, 16, rng) * 0.1;
    double prev = kPsnrCap + 1;
    for (int k = 1; k <= 8; ++k) {
      const double p = psnr(base, ImagePlane(base + k * 0.1 * noise));
      CHECK(p < prev);
      prev = p;
    }
  }
  SUBCASE("extent mismatch") {
    CHECK_THROWS_AS(psnr(ImagePlane::Zero(4, 4), ImagePlane::Zero(4, 5)), DimensionError);
  }
}

TEST_CASE("ssim") {
  Rng rng(3);
  SUBCASE("identity and symmetry") {
    for (int trial = 0; trial < 5; ++trial) {
      ImagePlane a = random_plane(20, 24, rng), b = random_plane(20, 24, rng);
      CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);
      CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
    }
  }
  SUBCASE("contrast inversion scores low") {
    ImagePlane unit(24, 24);
    for (Index r = 0; r < 24; ++r)
      for (Index c = 0; c < 24; ++c) unit(r, c) = ((r / 2 + c / 2) % 2) ? 0.75 : 0.25;
    ImagePlane inverted = 1.0 - unit;
    CHECK(ssim(normalized(unit), normalized(inverted)) < 0.2);
  }
  SUBCASE("constant images reduce to the luminance term") {
    const double x = 0.2, y = 0.7, c1 = 1e-4;
    const double expected = (2 * x * y + c1) / (x * x + y * y + c1);
    const double got = ssim(ImagePlane::Constant(16, 16, normalize_value(x)),
                            ImagePlane::Constant(16, 16, normalize_value(y)));
    CHECK(std::abs(got - expected) < 1e-9);
  }
  SUBCASE("too small or mismatched") {
    CHECK_THROWS_AS(ssim(ImagePlane::Zero(10, 20), ImagePlane::Zero(10, 20)), ImageError);
    CHECK_THROWS_AS(ssim(ImagePlane::Zero(12, 12), ImagePlane::Zero(12, 13)), DimensionError);
  }
}

TEST_CASE("pgm") {
  Rng rng(4);
  SUBCASE("save/load round trip within quantization") {
    ImagePlane p = random_plane(9, 14, rng);
    const auto path = std::filesystem::temp_directory_path() / "seqpatch_pgm_test.pgm";
    save_image(p, path);
    ImagePlane q = load_image(path);
    std::filesystem::remove(path);
    REQUIRE(q.rows() == 9);
    REQUIRE(q.cols() == 14);
    CHECK((denormalized(p) - denormalized(q)).abs().maxCoeff() <= 1.0 / 510.0 + 1e-15);
  }
  SUBCASE("black stays exactly zero") {
    ImagePlane q = decode_pgm(encode_pgm(ImagePlane::Constant(8, 8, -1.0)));
    CHECK((denormalized(q) == 0.0).all());
  }
  SUBCASE("header with 16 payload bytes") {
    std::string bytes = "P5 4 4 255\n";
    for (int i = 0; i < 16; ++i) bytes.push_back(static_cast<char>(i * 16));
    ImagePlane q = decode_pgm(bytes);
    CHECK(q.rows() == 4);
    CHECK(q.cols() == 4);
    CHECK(denormalized(q)(3, 3) == doctest::Approx(240.0 / 255.0));
  }
  SUBCASE("comments in the header") {
    std::string bytes = "P5\n# made by hand\n2 1\n255\n";
    bytes += '\x00';
    bytes += '\xff';
    ImagePlane q = decode_pgm(bytes);
    CHECK(q(0, 0) == -1.0);
    CHECK(q(0, 1) == 1.0);
  }
  SUBCASE("malformed input") {
    CHECK_THROWS_AS(decode_pgm("P2 4 4 255\n"), ImageError);
    CHECK_THROWS_AS(decode_pgm("P5 4 x 255\n"), ImageError);
    CHECK_THROWS_AS(decode_pgm(std::string("P5 4 4 255\n") + std::string(15, '\0')), ImageError);
    CHECK_THROWS_AS(load_image("/nonexistent/file.pgm"), ImageError);
  }
}

TEST_CASE("synthetic textures are deterministic and in range") {
  ImagePlane a = synthetic_texture(17, 64, 64), b = synthetic_texture(17, 64, 64);
  CHECK((a == b).all());
  CHECK(a.maxCoeff() <= 1.0);
  CHECK(a.minCoeff() >= -1.0);
  CHECK(!(synthetic_texture(18, 64, 64) == a).all());
}
