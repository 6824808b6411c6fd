#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "meshtrack/error.hpp"
#include "meshtrack/geometry.hpp"
#include "meshtrack/image_io.hpp"

namespace meshtrack {

/// Dense per-pixel displacement from one frame to the next, in pixels.
class FlowField {
 public:
  FlowField(int width, int height)
      : width_(width),
        height_(height),
        u_(static_cast<std::size_t>(width) * height, 0.0f),
        v_(static_cast<std::size_t>(width) * height, 0.0f) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("flow dimensions must be positive");
  }

  FlowField(int width, int height, std::vector<float> u, std::vector<float> v)
      : width_(width), height_(height), u_(std::move(u)), v_(std::move(v)) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("flow dimensions must be positive");
    const auto n = static_cast<std::size_t>(width) * height;
    if (u_.size() != n || v_.size() != n) throw std::invalid_argument("flow size mismatch");
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(u_[i]) || !std::isfinite(v_[i]))
        throw std::invalid_argument("non-finite flow value");
  }

  /// Spatially constant field.
  static FlowField constant(int width, int height, Point2 d) {
    const auto n = static_cast<std::size_t>(width) * height;
    return FlowField(width, height, std::vector<float>(n, static_cast<float>(d.x)),
                     std::vector<float>(n, static_cast<float>(d.y)));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<float>& u() const { return u_; }
  const std::vector<float>& v() const { return v_; }

  Point2 at(int x, int y) const {
    const auto i = static_cast<std::size_t>(y) * width_ + x;
    return {u_[i], v_[i]};
  }
  void set(int x, int y, Point2 d) {
    const auto i = static_cast<std::size_t>(y) * width_ + x;
    u_[i] = static_cast<float>(d.x);
    v_[i] = static_cast<float>(d.y);
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  int width_;
  int height_;
  std::vector<float> u_;
  std::vector<float> v_;
};

inline constexpr float kFloMagic = 202021.25f;
/// Middlebury "unknown flow" threshold.
inline constexpr float kFloUnknown = 1e9f;

namespace detail {

template <class T>
T load_le(const std::uint8_t* p) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <class T>
void store_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

}  // namespace detail

/// Parses a Middlebury .flo file (little-endian). Unknown-flow sentinels
/// become zero.
inline FlowField read_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("truncated .flo header");
  if (detail::load_le<float>(bytes.data()) != kFloMagic) throw FormatError("bad .flo magic");
  const auto w = detail::load_le<std::int32_t>(bytes.data() + 4);
  const auto h = detail::load_le<std::int32_t>(bytes.data() + 8);
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) throw FormatError("bad .flo dimensions");
  const auto n = static_cast<std::size_t>(w) * h;
  if (bytes.size() < 12 + n * 8) throw FormatError("truncated .flo payload");
  std::vector<float> u(n), v(n);
  const std::uint8_t* p = bytes.data() + 12;
  auto clean = [](float f) { return std::isfinite(f) && std::abs(f) <= kFloUnknown ? f : 0.0f; };
  for (std::size_t i = 0; i < n; ++i, p += 8) {
    u[i] = clean(detail::load_le<float>(p));
    v[i] = clean(detail::load_le<float>(p + 4));
  }
  return FlowField(w, h, std::move(u), std::move(v));
}

inline std::vector<std::uint8_t> write_flo(const FlowField& field) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + field.u().size() * 8);
  detail::store_le(out, kFloMagic);
  detail::store_le(out, static_cast<std::int32_t>(field.width()));
  detail::store_le(out, static_cast<std::int32_t>(field.height()));
  for (std::size_t i = 0; i < field.u().size(); ++i) {
    detail::store_le(out, field.u()[i]);
    detail::store_le(out, field.v()[i]);
  }
  return out;
}

namespace detail {

inline std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {(-t3 + 2 * t2 - t) / 2, (3 * t3 - 5 * t2 + 2) / 2, (-3 * t3 + 4 * t2 + t) / 2,
          (t3 - t2) / 2};
}

}  // namespace detail

/// Catmull-Rom bicubic interpolation of the displacement at p, u and v
/// independently. Coordinates and taps are clamped to the grid.
inline Point2 sample_bicubic(const FlowField& field, Point2 p) {
  const int w = field.width(), h = field.height();
  const double x = std::clamp(p.x, 0.0, static_cast<double>(w - 1));
  const double y = std::clamp(p.y, 0.0, static_cast<double>(h - 1));
  const int ix = static_cast<int>(std::floor(x)), iy = static_cast<int>(std::floor(y));
  const auto wx = detail::catmull_rom_weights(x - ix);
  const auto wy = detail::catmull_rom_weights(y - iy);
  Point2 out;
  for (int j = 0; j < 4; ++j) {
    const int yy = std::clamp(iy - 1 + j, 0, h - 1);
    Point2 row;
    for (int i = 0; i < 4; ++i) {
      const int xx = std::clamp(ix - 1 + i, 0, w - 1);
      row += wx[i] * field.at(xx, yy);
    }
    out += wy[j] * row;
  }
  return out;
}

namespace detail {

struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<double> px;

  double at(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return px[static_cast<std::size_t>(y) * width + x];
  }
};

inline FloatImage blur_downsample(const FloatImage& in) {
  static constexpr double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  FloatImage tmp{in.width, in.height, std::vector<double>(in.px.size())};
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * in.at(x + i, y);
      tmp.px[static_cast<std::size_t>(y) * in.width + x] = s;
    }
  FloatImage out{(in.width + 1) / 2, (in.height + 1) / 2, {}};
  out.px.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.at(2 * x, 2 * y + i);
      out.px[static_cast<std::size_t>(y) * out.width + x] = s;
    }
  return out;
}

/// SSD-cost ordering with the deterministic tie-break: smaller displacement
/// magnitude, then smaller u, then smaller v.
inline bool better_match(double cost, int u, int v, double best_cost, int bu, int bv) {
  if (cost != best_cost) return cost < best_cost;
  const int m = u * u + v * v, bm = bu * bu + bv * bv;
  if (m != bm) return m < bm;
  if (u != bu) return u < bu;
  return v < bv;
}

inline double median9(std::array<double, 9> a, int n) {
  std::sort(a.begin(), a.begin() + n);
  return a[n / 2];
}

/// Vertex offset of the parabola through (-1, cm), (0, c0), (1, cp), in [-0.5, 0.5].
inline double parabola_offset(double cm, double c0, double cp) {
  const double den = cm - 2 * c0 + cp;
  if (!(den > 0)) return 0.0;
  return std::clamp(0.5 * (cm - cp) / den, -0.5, 0.5);
}

}  // namespace detail

/// Fallback flow estimator: coarse-to-fine block matching (9x9 SSD window,
/// +-4 px search per level) over a Gaussian pyramid, parabolic sub-pixel
/// refinement at full resolution, then a 3x3 median.
inline FlowField estimate_flow(const GrayImage& frame_a, const GrayImage& frame_b, int levels = 3) {
  if (frame_a.width != frame_b.width || frame_a.height != frame_b.height)
    throw std::invalid_argument("frame dimensions differ");
  if (levels < 1) throw std::invalid_argument("levels must be >= 1");
  constexpr int kRadius = 4;
  constexpr int kHalfWindow = 4;

  std::vector<detail::FloatImage> pa(1), pb(1);
  pa[0] = {frame_a.width, frame_a.height, {frame_a.pixels.begin(), frame_a.pixels.end()}};
  pb[0] = {frame_b.width, frame_b.height, {frame_b.pixels.begin(), frame_b.pixels.end()}};
  for (int l = 1; l < levels; ++l) {
    pa.push_back(detail::blur_downsample(pa.back()));
    pb.push_back(detail::blur_downsample(pb.back()));
  }

  std::vector<int> fu, fv;  // integer flow at the previous (coarser) level
  std::vector<double> su(static_cast<std::size_t>(frame_a.width) * frame_a.height), sv(su.size());
  int pw = 0;
  for (int l = levels - 1; l >= 0; --l) {
    const auto& A = pa[l];
    const auto& B = pb[l];
    const int w = A.width, h = A.height;
    std::vector<int> nu(static_cast<std::size_t>(w) * h), nv(nu.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int pu = 0, pv = 0;
        if (!fu.empty()) {
          const int cx = std::min(x / 2, pw - 1);
          const int cy = std::min(y / 2, static_cast<int>(fu.size() / pw) - 1);
          pu = 2 * fu[static_cast<std::size_t>(cy) * pw + cx];
          pv = 2 * fv[static_cast<std::size_t>(cy) * pw + cx];
        }
        auto ssd = [&](int tu, int tv) {
          double cost = 0;
          for (int j = -kHalfWindow; j <= kHalfWindow; ++j)
            for (int i = -kHalfWindow; i <= kHalfWindow; ++i) {
              const double d = A.at(x + i, y + j) - B.at(x + i + tu, y + j + tv);
              cost += d * d;
            }
          return cost;
        };
        double best = std::numeric_limits<double>::infinity();
        int bu = 0, bv = 0;
        for (int dv = -kRadius; dv <= kRadius; ++dv)
          for (int du = -kRadius; du <= kRadius; ++du) {
            const int tu = pu + du, tv = pv + dv;
            const double cost = ssd(tu, tv);
            if (detail::better_match(cost, tu, tv, best, bu, bv)) {
              best = cost;
              bu = tu;
              bv = tv;
            }
          }
        const std::size_t idx = static_cast<std::size_t>(y) * w + x;
        nu[idx] = bu;
        nv[idx] = bv;
        if (l == 0 && best == 0) {
          su[idx] = bu;  // exact match
          sv[idx] = bv;
        } else if (l == 0) {
          su[idx] = bu + detail::parabola_offset(ssd(bu - 1, bv), best, ssd(bu + 1, bv));
          sv[idx] = bv + detail::parabola_offset(ssd(bu, bv - 1), best, ssd(bu, bv + 1));
        }
      }
    fu = std::move(nu);
    fv = std::move(nv);
    pw = w;
  }

  const int w = frame_a.width, h = frame_a.height;
  FlowField out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::array<double, 9> mu{}, mv{};
      int n = 0;
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i) {
          const int xx = x + i, yy = y + j;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          mu[n] = su[static_cast<std::size_t>(yy) * w + xx];
          mv[n] = sv[static_cast<std::size_t>(yy) * w + xx];
          ++n;
        }
      out.set(x, y, {detail::median9(mu, n), detail::median9(mv, n)});
    }
  return out;
}

}  // namespace meshtrack
