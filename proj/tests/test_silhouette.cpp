#include <gtest/gtest.h>

#include <random>

#include "meshtrack/image_io.hpp"
#include "meshtrack/silhouette.hpp"

using namespace meshtrack;

namespace {

GrayImage image_from(int w, int h, const std::vector<std::uint8_t>& bits) {
  GrayImage img(w, h);
  for (std::size_t i = 0; i < bits.size(); ++i) img.pixels[i] = bits[i] ? 255 : 0;
  return img;
}

SilhouetteMask disk(int w, int h, double cx, double cy, double r) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) bits[y * w + x] = std::hypot(x - cx, y - cy) <= r;
  return SilhouetteMask(w, h, bits);
}

// Brute force: inside -> -(distance to nearest boundary pixel), outside ->
// +(distance to nearest figure pixel).
double brute_sdf(const SilhouetteMask& m, int x, int y) {
  double best = std::numeric_limits<double>::infinity();
  const bool in = m.at(x, y);
  for (int v = 0; v < m.height(); ++v)
    for (int u = 0; u < m.width(); ++u) {
      if (!m.at(u, v)) continue;
      if (in) {
        bool edge = false;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            if (!m.at(u + dx, v + dy)) edge = true;
        if (!edge) continue;
      }
      best = std::min(best, std::hypot(u - x, v - y));
    }
  return in ? -best : best;
}

}  // namespace

TEST(LoadMask, AllWhite) {
  const auto m = load_mask(encode_pgm(GrayImage(4, 4, 255)));
  EXPECT_EQ(m.area(), 16);
}

TEST(LoadMask, KeepsLargestComponent) {
  std::vector<std::uint8_t> bits(12 * 8, 0);
  for (int x = 1; x <= 5; ++x) bits[2 * 12 + x] = bits[3 * 12 + x] = 1;  // 10 px
  bits[6 * 12 + 9] = bits[6 * 12 + 10] = 1;                              // 2 px
  const auto m = load_mask(encode_pgm(image_from(12, 8, bits)));
  EXPECT_EQ(m.area(), 10);
  EXPECT_TRUE(m.at(1, 2));
  EXPECT_FALSE(m.at(9, 6));
}

TEST(LoadMask, ComponentOracleOnRandomBlobs) {
  std::mt19937_64 rng(21);
  std::bernoulli_distribution coin(0.45);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 24, h = 18;
    std::vector<std::uint8_t> bits(w * h);
    for (auto& b : bits) b = coin(rng);
    // Flood-fill labeling, 8-connected.
    std::vector<int> label(w * h, -1);
    std::vector<int> sizes;
    for (int s = 0; s < w * h; ++s) {
      if (!bits[s] || label[s] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      sizes.push_back(0);
      std::vector<int> stack{s};
      label[s] = id;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        ++sizes[id];
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = p % w + dx, y = p / w + dy;
            if (x < 0 || y < 0 || x >= w || y >= h) continue;
            const int q = y * w + x;
            if (bits[q] && label[q] < 0) {
              label[q] = id;
              stack.push_back(q);
            }
          }
      }
    }
    if (sizes.empty()) continue;
    const int biggest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    const auto m = load_mask(encode_pgm(image_from(w, h, bits)));
    EXPECT_EQ(m.area(), sizes[biggest]);
    for (int i = 0; i < w * h; ++i) EXPECT_EQ(m.at(i % w, i / w), label[i] == biggest);
  }
}

TEST(LoadMask, ThresholdsAt128) {
  GrayImage img(2, 1);
  img.pixels = {127, 128};
  const auto m = mask_from_image(img);
  EXPECT_FALSE(m.at(0, 0));
  EXPECT_TRUE(m.at(1, 0));
}

TEST(LoadMask, Errors) {
  EXPECT_THROW(load_mask(encode_pgm(GrayImage(5, 5, 0))), EmptySilhouetteError);
  const std::string junk = "P5\n4 4\n255\nxx";
  EXPECT_THROW(load_mask(std::vector<std::uint8_t>(junk.begin(), junk.end())), FormatError);
  const std::string p2 = "P2\n1 1\n255\n0\n";
  EXPECT_THROW(load_mask(std::vector<std::uint8_t>(p2.begin(), p2.end())), FormatError);
}

TEST(LoadMask, PgmWithComments) {
  std::string s = "P5\n# made by hand\n2 1\n255\n";
  s.push_back(static_cast<char>(255));
  s.push_back(0);
  const auto m = load_mask(std::vector<std::uint8_t>(s.begin(), s.end()));
  EXPECT_EQ(m.area(), 1);
}

TEST(LoadMask, ReloadIsIdempotent) {
  const auto m = disk(30, 20, 12, 9, 7);
  const auto again = load_mask(encode_mask_pgm(m));
  EXPECT_EQ(m, again);
  EXPECT_EQ(load_mask(encode_png(m.to_image())), m);
}

TEST(IsInside, Rounding) {
  std::vector<std::uint8_t> bits(36, 0);
  bits[3 * 6 + 3] = 1;
  const SilhouetteMask m(6, 6, bits);
  EXPECT_TRUE(is_inside(m, {3.4, 3.4}));
  EXPECT_FALSE(is_inside(m, {-1, 2}));
  EXPECT_FALSE(is_inside(m, {3.5, 3.0}));  // rounds to (4, 3)
  EXPECT_TRUE(is_inside(m, {2.5, 3.0}));   // rounds to (3, 3)
  EXPECT_FALSE(is_inside(m, {100, 100}));
}

TEST(SignedDistance, SinglePixel) {
  std::vector<std::uint8_t> bits(49, 0);
  bits[3 * 7 + 3] = 1;
  const auto f = signed_distance(SilhouetteMask(7, 7, bits));
  EXPECT_LE(f.at(3, 3), 0.0);
  EXPECT_NEAR(f.at(3, 5), 2.0, 1.0);
}

TEST(SignedDistance, FullMaskNegativeAwayFromBorder) {
  const auto f = signed_distance(SilhouetteMask(8, 8, std::vector<std::uint8_t>(64, 1)));
  for (int y = 1; y < 7; ++y)
    for (int x = 1; x < 7; ++x) EXPECT_LT(f.at(x, y), 0.0);
  EXPECT_EQ(f.at(0, 4), 0.0);
}

TEST(SignedDistance, DiskCenter) {
  const auto m = disk(20, 20, 10, 10, 6);
  const auto f = signed_distance(m);
  EXPECT_NEAR(f.at(10, 10), -6.0, 1.0);
  EXPECT_DOUBLE_EQ(f.at(10, 10), brute_sdf(m, 10, 10));
}

TEST(SignedDistance, MatchesBruteForceEverywhere) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 4; ++trial) {
    const int w = 23 + trial, h = 17;
    std::vector<std::uint8_t> bits(w * h, 0);
    for (int k = 0; k < 3; ++k) {
      const double cx = u(rng) * w, cy = u(rng) * h, r = 2 + 5 * u(rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (std::hypot(x - cx, y - cy) <= r) bits[y * w + x] = 1;
    }
    if (std::count(bits.begin(), bits.end(), 1) == 0) continue;
    const SilhouetteMask m(w, h, bits);
    const auto f = signed_distance(m);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        ASSERT_NEAR(f.at(x, y), brute_sdf(m, x, y), 1e-12) << x << "," << y;
        EXPECT_EQ(f.at(x, y) < 0, m.at(x, y) && f.at(x, y) != 0);
      }
  }
}

TEST(SignedDistance, SignAndLipschitz) {
  const auto m = disk(40, 30, 18, 14, 9);
  const auto f = signed_distance(m);
  const auto boundary = boundary_pixels(m);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      const double v = f.at(x, y);
      if (boundary[y * 40 + x])
        EXPECT_EQ(v, 0.0);
      else
        EXPECT_EQ(v < 0, m.at(x, y));
      if (x + 1 < 40) EXPECT_LE(std::abs(v - f.at(x + 1, y)), 1.0 + 1.0);
      if (y + 1 < 30) EXPECT_LE(std::abs(v - f.at(x, y + 1)), 1.0 + 1.0);
    }
}

TEST(SignedDistance, BilinearSampleAndOutsideGrowth) {
  const auto f = signed_distance(disk(20, 20, 10, 10, 6));
  EXPECT_NEAR(f.sample({10, 10}), f.at(10, 10), 1e-12);
  EXPECT_NEAR(f.sample({10.5, 10}), 0.5 * (f.at(10, 10) + f.at(11, 10)), 1e-12);
  EXPECT_NEAR(f.sample({-3, 10}), f.at(0, 10) + 3.0, 1e-12);
}

TEST(NearestFigurePixel, FindsClosest) {
  const auto m = disk(30, 30, 15, 15, 5);
  const auto f = signed_distance(m);
  const Point2 q = nearest_figure_pixel(m, f, {15, 2});
  EXPECT_EQ(q, (Point2{15, 10}));
  EXPECT_TRUE(is_inside(m, nearest_figure_pixel(m, f, {-20, -20})));
}
