#include <gtest/gtest.h>

#include <random>

#include "meshtrack/flow.hpp"

using namespace meshtrack;

namespace {

GrayImage noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  GrayImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(u(rng));
  // Smooth a little so the pyramid keeps structure.
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int s = 0, n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          s += img.at(xx, yy);
          ++n;
        }
      out.at(x, y) = static_cast<std::uint8_t>(s / n);
    }
  return out;
}

}  // namespace

TEST(Flo, SinglePixelRoundTrip) {
  FlowField f(1, 1);
  f.set(0, 0, {1.5, -2.0});
  const auto back = read_flo(write_flo(f));
  EXPECT_EQ(back.at(0, 0), (Point2{1.5, -2.0}));
}

TEST(Flo, LayoutIsMiddlebury) {
  FlowField f(2, 1);
  f.set(1, 0, {0.25, 4.0});
  const auto bytes = write_flo(f);
  ASSERT_EQ(bytes.size(), 12u + 16u);
  float magic;
  std::int32_t w, h;
  std::memcpy(&magic, bytes.data(), 4);
  std::memcpy(&w, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  EXPECT_EQ(magic, 202021.25f);
  EXPECT_EQ(w, 2);
  EXPECT_EQ(h, 1);
  float u1;
  std::memcpy(&u1, bytes.data() + 12 + 8, 4);
  EXPECT_EQ(u1, 0.25f);
}

TEST(Flo, Errors) {
  auto bytes = write_flo(FlowField(2, 2));
  auto bad = bytes;
  std::fill(bad.begin(), bad.begin() + 4, 0);
  EXPECT_THROW(read_flo(bad), FormatError);
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(read_flo(bytes), FormatError);
  EXPECT_THROW(read_flo(std::vector<std::uint8_t>(5)), FormatError);
}

TEST(Flo, UnknownSentinelBecomesZero) {
  FlowField f(1, 1);
  auto bytes = write_flo(f);
  const float big = 1.5e9f;
  std::memcpy(bytes.data() + 12, &big, 4);
  EXPECT_EQ(read_flo(bytes).at(0, 0), (Point2{0, 0}));
}

TEST(Flo, RandomRoundTripIsBitExact) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(-50, 50);
  FlowField f(17, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x) f.set(x, y, {u(rng), u(rng)});
  EXPECT_EQ(read_flo(write_flo(f)), f);
}

TEST(Bicubic, ReproducesConstants) {
  const auto f = FlowField::constant(8, 6, {2, 3});
  for (Point2 p : {Point2{0, 0}, Point2{3.3, 2.7}, Point2{7.9, 5.5}, Point2{-4, 20}}) {
    const Point2 s = sample_bicubic(f, p);
    EXPECT_NEAR(s.x, 2, 1e-6);
    EXPECT_NEAR(s.y, 3, 1e-6);
  }
}

TEST(Bicubic, ReproducesLinearAndBilinear) {
  FlowField f(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) f.set(x, y, {double(x), 0.25 * x * y});
  EXPECT_NEAR(sample_bicubic(f, {2.5, 2}).x, 2.5, 1e-6);
  // Interior samples, away from the clamped border taps.
  for (Point2 p : {Point2{3.3, 4.6}, Point2{5.75, 2.2}, Point2{6.1, 6.9}}) {
    const Point2 s = sample_bicubic(f, p);
    EXPECT_NEAR(s.x, p.x, 1e-5);
    EXPECT_NEAR(s.y, 0.25 * p.x * p.y, 1e-5);
  }
}

TEST(Bicubic, ExactAtKnots) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-5, 5);
  FlowField f(7, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) f.set(x, y, {u(rng), u(rng)});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      const Point2 s = sample_bicubic(f, {double(x), double(y)});
      EXPECT_NEAR(s.x, f.at(x, y).x, 1e-6);
      EXPECT_NEAR(s.y, f.at(x, y).y, 1e-6);
    }
}

TEST(Bicubic, ClampsOutsideGrid) {
  FlowField f(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) f.set(x, y, {double(x + 10 * y), 0});
  EXPECT_NEAR(sample_bicubic(f, {-3, -3}).x, 0.0, 1e-9);
  EXPECT_NEAR(sample_bicubic(f, {9, 9}).x, 33.0, 1e-9);
}

TEST(EstimateFlow, RecoversShift) {
  const int w = 64, h = 48;
  const GrayImage a = noise_image(w + 8, h, 3);
  GrayImage first(w, h), second(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      first.at(x, y) = a.at(x + 4, y);
      second.at(x, y) = a.at(x + 1, y);  // content moves +3 in x
    }
  const FlowField f = estimate_flow(first, second);
  std::vector<double> us, vs;
  for (int y = 8; y < h - 8; ++y)
    for (int x = 8; x < w - 8; ++x) {
      us.push_back(f.at(x, y).x);
      vs.push_back(f.at(x, y).y);
    }
  std::nth_element(us.begin(), us.begin() + us.size() / 2, us.end());
  std::nth_element(vs.begin(), vs.begin() + vs.size() / 2, vs.end());
  EXPECT_NEAR(us[us.size() / 2], 3.0, 0.5);
  EXPECT_NEAR(vs[vs.size() / 2], 0.0, 0.5);
}

TEST(EstimateFlow, IdenticalAndFlatGiveZero) {
  const GrayImage a = noise_image(32, 24, 5);
  EXPECT_EQ(estimate_flow(a, a), FlowField(32, 24));
  const GrayImage flat(20, 20, 90);
  EXPECT_EQ(estimate_flow(flat, flat), FlowField(20, 20));
}

TEST(EstimateFlow, TranslationConsistent) {
  const GrayImage big = noise_image(80, 60, 12);
  auto crop = [&](int ox, int oy) {
    GrayImage out(60, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 60; ++x) out.at(x, y) = big.at(x + ox, y + oy);
    return out;
  };
  // Same motion (+2, +1), observed through windows offset by (4, 4).
  const FlowField f1 = estimate_flow(crop(6, 6), crop(4, 5));
  const FlowField f2 = estimate_flow(crop(10, 10), crop(8, 9));
  for (int y = 12; y < 28; ++y)
    for (int x = 12; x < 44; ++x) EXPECT_EQ(f1.at(x + 4, y + 4), f2.at(x, y));
}

TEST(EstimateFlow, DimensionMismatch) {
  EXPECT_THROW(estimate_flow(GrayImage(4, 4), GrayImage(5, 4)), std::invalid_argument);
}

TEST(EstimateFlow, SubPixelShift) {
  auto render = [](double dx) {
    GrayImage img(64, 48);
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 64; ++x) {
        const double u = x - dx;
        const double v = 128 + 50 * std::sin(0.45 * u + 0.3 * y) + 40 * std::cos(0.23 * y - 0.37 * u);
        img.at(x, y) = static_cast<std::uint8_t>(std::lround(v));
      }
    return img;
  };
  const FlowField f = estimate_flow(render(0.0), render(1.4));
  std::vector<double> us;
  for (int y = 10; y < 38; ++y)
    for (int x = 10; x < 54; ++x) us.push_back(f.at(x, y).x);
  std::nth_element(us.begin(), us.begin() + us.size() / 2, us.end());
  EXPECT_NEAR(us[us.size() / 2], 1.4, 0.2);
}
