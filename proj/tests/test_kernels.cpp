#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "barkid/kernels.hpp"
#include "test_util.hpp"

using namespace barkid;
namespace k = barkid::kernels;

namespace {

std::vector<float> rows_of(const std::vector<Descriptor>& ds) {
  std::vector<float> out;
  for (const Descriptor& d : ds) out.insert(out.end(), d.values.begin(), d.values.end());
  return out;
}

}  // namespace

TEST(Kernels, SquaredL2AgreesWithSerial) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 500; ++t) {
    const Descriptor a = testutil::random_unit(rng);
    const Descriptor b = testutil::random_unit(rng);
    EXPECT_NEAR(k::squared_l2(a.values.data(), b.values.data()),
                k::squared_l2_serial(a.values.data(), b.values.data()), 1e-5);
    EXPECT_NEAR(k::squared_l2_serial(a.values.data(), b.values.data()), testutil::dsq(a, b), 1e-12);
  }
}

TEST(Kernels, NearestTwoMatchesSerial) {
  std::mt19937_64 rng(12);
  const std::vector<float> q = rows_of(testutil::random_units(rng, 300));
  const std::vector<float> b = rows_of(testutil::random_units(rng, 257));
  std::vector<uint8_t> valid(257, 1);
  for (size_t i = 0; i < valid.size(); i += 7) valid[i] = 0;
  std::vector<k::NearestTwo> fast(300), slow(300);
  k::nearest_two(q, b, valid, fast);
  k::nearest_two_serial(q, b, valid, slow);
  for (size_t i = 0; i < fast.size(); ++i) {
    EXPECT_EQ(fast[i].index, slow[i].index);
    EXPECT_NE(fast[i].index % 7, 0);
    EXPECT_NEAR(fast[i].d1, slow[i].d1, 1e-5);
    EXPECT_NEAR(fast[i].d2, slow[i].d2, 1e-5);
    EXPECT_LE(fast[i].d1, fast[i].d2);
  }
}

TEST(Kernels, NearestTwoTiesAndSentinels) {
  std::vector<float> base(3 * k::kDescriptorDim, 0.0f);
  base[0] = 1.0f;
  base[k::kDescriptorDim] = 1.0f;  // rows 0 and 1 equal
  base[2 * k::kDescriptorDim + 1] = 1.0f;
  std::vector<float> q(k::kDescriptorDim, 0.0f);
  q[0] = 1.0f;
  std::vector<k::NearestTwo> out(1);
  const std::vector<uint8_t> all{1, 1, 1};
  k::nearest_two(q, base, all, out);
  EXPECT_EQ(out[0].index, 0);
  EXPECT_EQ(out[0].d1, 0.0f);
  EXPECT_EQ(out[0].d2, 0.0f);

  const std::vector<uint8_t> one{0, 0, 1};
  k::nearest_two(q, base, one, out);
  EXPECT_EQ(out[0].index, 2);
  EXPECT_EQ(out[0].d2, k::kInfinity);

  const std::vector<uint8_t> none{0, 0, 0};
  k::nearest_two(q, base, none, out);
  EXPECT_EQ(out[0].index, -1);
}

TEST(Kernels, AssignNearestMatchesSerial) {
  std::mt19937_64 rng(13);
  const std::vector<float> pts = rows_of(testutil::random_units(rng, 400));
  std::vector<float> centers = rows_of(testutil::random_units(rng, 33));
  // Duplicate center: the lower index must win.
  std::copy(centers.begin(), centers.begin() + k::kDescriptorDim, centers.begin() + 5 * k::kDescriptorDim);
  std::vector<int> l1(400), l2(400);
  std::vector<float> d1(400), d2(400);
  k::assign_nearest(pts, centers, l1, d1);
  k::assign_nearest_serial(pts, centers, l2, d2);
  EXPECT_EQ(l1, l2);
  for (size_t i = 0; i < d1.size(); ++i) EXPECT_NEAR(d1[i], d2[i], 1e-5);
  for (int l : l1) EXPECT_NE(l, 5);
}

TEST(Kernels, ConvolutionMatchesSerial) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  FloatImage img(53, 29);
  for (float& v : img.pixels) v = u(rng);
  const std::vector<float> kernel = gaussian_kernel(2.3f);
  FloatImage a, b;
  k::convolve_rows(img, kernel, a);
  k::convolve_rows_serial(img, kernel, b);
  ASSERT_EQ(a.pixels.size(), b.pixels.size());
  for (size_t i = 0; i < a.pixels.size(); ++i) EXPECT_NEAR(a.pixels[i], b.pixels[i], 1e-6);
  k::convolve_cols(img, kernel, a);
  k::convolve_cols_serial(img, kernel, b);
  for (size_t i = 0; i < a.pixels.size(); ++i) EXPECT_NEAR(a.pixels[i], b.pixels[i], 1e-6);
}

TEST(Kernels, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(15);
  const std::vector<float> q = rows_of(testutil::random_units(rng, 120));
  const std::vector<float> b = rows_of(testutil::random_units(rng, 90));
  const std::vector<uint8_t> valid(90, 1);
  std::vector<k::NearestTwo> one(120), many(120);
  const int saved = k::max_threads();
  k::set_threads(1);
  k::nearest_two(q, b, valid, one);
  k::set_threads(4);
  k::nearest_two(q, b, valid, many);
  k::set_threads(saved);
  for (size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].index, many[i].index);
    EXPECT_EQ(one[i].d1, many[i].d1);
    EXPECT_EQ(one[i].d2, many[i].d2);
  }
}
