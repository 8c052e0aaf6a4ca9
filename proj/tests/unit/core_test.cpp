#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/core/image.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/core/rng.hpp"

namespace verse3d {
namespace {

ImageBuffer random_image(int w, int h, int c, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(w, h, c);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

TEST(Hash, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, Base64RoundTrip) {
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  for (const char* s : {"", "f", "fo", "foo", "foob", "fooba", "foobar"}) {
    EXPECT_EQ(base64_decode(base64_encode(s)), s);
  }
  EXPECT_THROW(base64_decode("Zm9v!!"), ParseError);
}

TEST(Rng, ReplaysFromSeed) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform(-2.0, 3.0);
    EXPECT_GE(u, -2.0);
    EXPECT_LE(u, 3.0);
  }
}

TEST(Image, InvariantsChecked) {
  ImageBuffer img(2, 2, 3, 0.5);
  EXPECT_NO_THROW(img.validate_color());
  img.at(1, 1, 2) = 1.5;
  EXPECT_THROW(img.validate_color(), DomainError);
  ImageBuffer depth(2, 2, 1, 3.0);
  EXPECT_NO_THROW(depth.validate_depth());
  depth.at(0, 0) = -1.0;
  EXPECT_THROW(depth.validate_depth(), DomainError);
  EXPECT_THROW(PanoImage(ImageBuffer(3, 2, 1)), DomainError);
}

TEST(Image, BilinearHitsPixelCentersExactly) {
  const ImageBuffer img = random_image(7, 5, 3, 1);
  double out[3];
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) {
      sample_bilinear(img, x, y, WrapMode::kClamp, WrapMode::kClamp, out);
      for (int c = 0; c < 3; ++c) EXPECT_EQ(out[c], img.at(x, y, c));
    }
  }
  // Horizontal wrap blends the last and first columns.
  sample_bilinear(img, 6.5, 2, WrapMode::kWrap, WrapMode::kClamp, out);
  EXPECT_NEAR(out[0], 0.5 * (img.at(6, 2, 0) + img.at(0, 2, 0)), 1e-15);
}

TEST(Image, ResizeToSameSizeIsIdentity) {
  const ImageBuffer img = random_image(9, 6, 1, 2);
  const ImageBuffer same = resize_bicubic(img, 9, 6);
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    EXPECT_NEAR(same.data()[i], img.data()[i], 1e-12);
  }
}

TEST(Image, BlurPreservesConstant) {
  const ImageBuffer img(20, 10, 1, 0.3);
  const ImageBuffer blurred = gaussian_blur(img, 2.0);
  for (double v : blurred.data()) EXPECT_NEAR(v, 0.3, 1e-12);
}

TEST(Image, PsnrOfIdenticalIsInfinite) {
  const ImageBuffer img = random_image(4, 4, 3, 3);
  EXPECT_TRUE(std::isinf(psnr(img, img)));
  ImageBuffer other = img;
  for (double& v : other.data()) v = std::min(1.0, v + 0.01);
  EXPECT_GT(psnr(img, other), 39.0);
}

TEST(ImageIo, Png8RoundTripsAtBitDepth) {
  ImageBuffer img = random_image(13, 7, 3, 4);
  for (double& v : img.data()) v = std::round(v * 255.0) / 255.0;
  EXPECT_EQ(decode_png(encode_png(img, 8)), img);
}

TEST(ImageIo, Png16RoundTripsAtBitDepth) {
  ImageBuffer img = random_image(5, 9, 1, 5);
  for (double& v : img.data()) v = std::round(v * 65535.0) / 65535.0;
  EXPECT_EQ(decode_png(encode_png(img, 16)), img);
}

TEST(ImageIo, DepthPng16CarriesScale) {
  ImageBuffer depth(8, 4, 1);
  for (int i = 0; i < 32; ++i) depth.data()[i] = 0.5 + 0.25 * i;
  const EncodedDepth enc = encode_depth_png16(depth);
  EXPECT_DOUBLE_EQ(enc.scale, 0.5 + 0.25 * 31);
  const ImageBuffer back = decode_depth_png16(enc.png);
  for (int i = 0; i < 32; ++i) EXPECT_NEAR(back.data()[i], depth.data()[i], enc.scale / 65535.0);
}

TEST(ImageIo, ExrRoundTripsFloat) {
  ImageBuffer depth(6, 3, 1);
  for (int i = 0; i < 18; ++i) depth.data()[i] = static_cast<float>(0.1 * i + 1.0 / 3.0);
  const auto path = std::filesystem::temp_directory_path() / "verse3d_core_test.exr";
  write_depth_exr(path, depth);
  EXPECT_EQ(read_depth_exr(path), depth);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace verse3d
