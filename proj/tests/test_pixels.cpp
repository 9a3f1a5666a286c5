#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "barkid/error.hpp"
#include "barkid/image.hpp"
#include "barkid/image_io.hpp"

using namespace barkid;

namespace {

Image random_gray(std::mt19937_64& rng, uint32_t w, uint32_t h, uint32_t channels = 1) {
  Image img(w, h, channels);
  std::uniform_int_distribution<int> u(0, 255);
  for (uint8_t& v : img.data()) v = static_cast<uint8_t>(u(rng));
  return img;
}

// Dense 2-D convolution with replicated borders, weights from the closed-form
// Gaussian normalised over the (2r+1)^2 window.
FloatImage dense_blur(const FloatImage& in, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  double total = 0.0;
  for (int j = -r; j <= r; ++j) {
    for (int i = -r; i <= r; ++i) total += std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
  }
  FloatImage out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j) {
        for (int i = -r; i <= r; ++i) {
          const int xx = std::clamp(x + i, 0, in.width - 1);
          const int yy = std::clamp(y + j, 0, in.height - 1);
          acc += std::exp(-(i * i + j * j) / (2.0 * sigma * sigma)) * in(xx, yy);
        }
      }
      out(x, y) = static_cast<float>(acc / total);
    }
  }
  return out;
}

}  // namespace

TEST(Image, RejectsZeroSize) {
  EXPECT_THROW(Image(0, 4, 1), Error);
  EXPECT_THROW(Image(4, 4, 2), Error);
  EXPECT_THROW(Image(2, 2, 1, std::vector<uint8_t>(3)), Error);
  const Image ok(3, 2, 3);
  EXPECT_EQ(ok.data().size(), 18u);
}

TEST(Grayscale, WhiteStaysWhite) {
  const Image img(2, 2, 3, 255);
  const Image g = to_grayscale(img);
  ASSERT_EQ(g.channels(), 1u);
  for (uint8_t v : g.data()) EXPECT_EQ(v, 255);
}

TEST(Grayscale, PureRed) {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = 255;
  EXPECT_EQ(to_grayscale(img).at(0, 0), static_cast<uint8_t>(std::lround(0.299 * 255)));
  EXPECT_EQ(to_grayscale(img).at(0, 0), 76);
}

TEST(Grayscale, SingleChannelUnchanged) {
  std::mt19937_64 rng(1);
  const Image img = random_gray(rng, 7, 5);
  EXPECT_EQ(to_grayscale(img), img);
}

TEST(Blur, SigmaZeroIsIdentity) {
  std::mt19937_64 rng(2);
  const Image img = random_gray(rng, 13, 9, 3);
  EXPECT_EQ(gaussian_blur(img, 0.0f), img);
}

TEST(Blur, NegativeSigmaThrows) {
  const Image img(4, 4, 1);
  try {
    gaussian_blur(img, -1.0f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParameter);
  }
}

TEST(Blur, ConstantImageUnchanged) {
  const Image img(17, 11, 1, 93);
  for (float s : {0.5f, 1.0f, 3.0f, 7.5f}) EXPECT_EQ(gaussian_blur(img, s), img);
  FloatImage f(9, 9, 0.37f);
  for (float v : gaussian_blur(f, 2.0f).pixels) EXPECT_NEAR(v, 0.37f, 1e-6);
}

TEST(Blur, KernelRadiusAndNormalisation) {
  for (float s : {0.3f, 1.0f, 2.5f}) {
    const std::vector<float> k = gaussian_kernel(s);
    EXPECT_EQ(k.size(), 2 * static_cast<size_t>(std::ceil(3.0 * s)) + 1);
    double sum = 0.0;
    for (float v : k) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Blur, ImpulseCentreEqualsKernelPeak) {
  FloatImage img(21, 21, 0.0f);
  img(10, 10) = 1.0f;
  const FloatImage out = gaussian_blur(img, 1.0f);
  double norm = 0.0;
  for (int j = -3; j <= 3; ++j) {
    for (int i = -3; i <= 3; ++i) norm += std::exp(-(i * i + j * j) / 2.0);
  }
  EXPECT_NEAR(out(10, 10), 1.0 / norm, 1e-6);
}

TEST(Blur, MatchesDenseOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 6; ++trial) {
    FloatImage img(8 + trial * 9, 64 - trial * 7);
    for (float& v : img.pixels) v = u(rng);
    const double sigma = 0.6 + trial * 0.7;
    const FloatImage fast = gaussian_blur(img, static_cast<float>(sigma));
    const FloatImage ref = dense_blur(img, sigma);
    for (size_t i = 0; i < ref.pixels.size(); ++i) ASSERT_NEAR(fast.pixels[i], ref.pixels[i], 1e-6);
  }
}

TEST(Downsample, Dimensions) {
  const Image img(100, 200, 1);
  const Image d = downsample(img, 2.0f);
  EXPECT_EQ(d.width(), 50u);
  EXPECT_EQ(d.height(), 100u);
  const Image e = downsample(Image(5, 3, 1), 2.0f);
  EXPECT_EQ(e.width(), 3u);  // round(2.5)
  EXPECT_EQ(e.height(), 2u);  // round(1.5)
}

TEST(Downsample, PhiOneIsIdentity) {
  std::mt19937_64 rng(4);
  const Image img = random_gray(rng, 31, 17, 3);
  EXPECT_EQ(downsample(img, 1.0f), img);
}

TEST(Downsample, PhiBelowOneThrows) { EXPECT_THROW(downsample(Image(4, 4, 1), 0.5f), Error); }

TEST(Downsample, CheckerboardAverages) {
  Image img(2, 2, 1);
  img.at(0, 0) = 255;
  img.at(1, 1) = 255;
  const Image d = downsample(img, 2.0f);
  ASSERT_EQ(d.width(), 1u);
  // Sample point (0.5, 0.5): the bilinear mean of the four pixels.
  EXPECT_NEAR(d.at(0, 0), 127.5, 0.5);
}

TEST(Downsample, ComposedDimensionsAgree) {
  for (uint32_t w : {97u, 128u, 301u}) {
    for (float a : {1.5f, 2.0f, 3.0f}) {
      for (float b : {1.0f, 2.0f, 2.5f}) {
        const Image img(w, w / 2 + 3, 1);
        const Image two = downsample(downsample(img, a), b);
        const Image one = downsample(img, a * b);
        EXPECT_LE(std::abs(int(two.width()) - int(one.width())), 1);
        EXPECT_LE(std::abs(int(two.height()) - int(one.height())), 1);
      }
    }
  }
}

TEST(Gradients, ConstantIsZero) {
  const GradientField g = gradients(Image(9, 9, 1, 200));
  for (float m : g.magnitude.pixels) EXPECT_EQ(m, 0.0f);
}

TEST(Gradients, Ramps) {
  FloatImage h(12, 12), v(12, 12);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 12; ++x) {
      h(x, y) = static_cast<float>(x);
      v(x, y) = static_cast<float>(y);
    }
  }
  const GradientField gh = gradients(h);
  const GradientField gv = gradients(v);
  for (int y = 1; y < 11; ++y) {
    for (int x = 1; x < 11; ++x) {
      EXPECT_FLOAT_EQ(gh.magnitude(x, y), 1.0f);
      EXPECT_FLOAT_EQ(gh.orientation(x, y), 0.0f);
      EXPECT_FLOAT_EQ(gv.magnitude(x, y), 1.0f);
      EXPECT_NEAR(gv.orientation(x, y), std::numbers::pi / 2, 1e-6);
    }
  }
}

TEST(Gradients, ShiftInvariantAndInRange) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 100.0f);
  FloatImage img(20, 15);
  for (float& v : img.pixels) v = std::round(u(rng));
  FloatImage shifted = img;
  for (float& v : shifted.pixels) v += 37.0f;
  const GradientField a = gradients(img);
  const GradientField b = gradients(shifted);
  EXPECT_EQ(a.magnitude.pixels, b.magnitude.pixels);
  EXPECT_EQ(a.orientation.pixels, b.orientation.pixels);
  for (size_t i = 0; i < a.orientation.pixels.size(); ++i) {
    EXPECT_GE(a.magnitude.pixels[i], 0.0f);
    EXPECT_GE(a.orientation.pixels[i], 0.0f);
    EXPECT_LT(a.orientation.pixels[i], 2.0f * std::numbers::pi_v<float>);
  }
}

class ImageIo : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "barkid_test_io";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(ImageIo, RoundTripsEveryFormat) {
  std::mt19937_64 rng(6);
  const Image gray = random_gray(rng, 37, 23, 1);
  const Image rgb = random_gray(rng, 19, 41, 3);
  for (const char* name : {"g.png", "g.pgm"}) {
    write_image(gray, dir / name);
    EXPECT_EQ(read_image(dir / name), gray) << name;
  }
  for (const char* name : {"c.png", "c.ppm"}) {
    write_image(rgb, dir / name);
    EXPECT_EQ(read_image(dir / name), rgb) << name;
  }
}

TEST_F(ImageIo, RejectsOtherFormats) {
  const Image img(4, 4, 1);
  try {
    write_image(img, dir / "x.jpg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
  std::ofstream(dir / "junk.png") << "GIF89a not really";
  EXPECT_THROW(read_image(dir / "junk.png"), Error);
  EXPECT_THROW(read_image(dir / "missing.png"), Error);
}
