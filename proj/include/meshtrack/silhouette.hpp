#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "meshtrack/error.hpp"
#include "meshtrack/geometry.hpp"
#include "meshtrack/image_io.hpp"

namespace meshtrack {

/// Binary figure/background mask of one frame. Always holds at least one
/// figure pixel.
class SilhouetteMask {
 public:
  SilhouetteMask(int width, int height, std::vector<std::uint8_t> bits)
      : width_(width), height_(height), bits_(std::move(bits)) {
    if (width_ <= 0 || height_ <= 0) throw std::invalid_argument("mask dimensions must be positive");
    if (bits_.size() != static_cast<std::size_t>(width_) * height_)
      throw std::invalid_argument("mask size does not match dimensions");
    count_ = 0;
    for (auto& b : bits_) {
      b = b ? 1 : 0;
      count_ += b;
    }
    if (count_ == 0) throw EmptySilhouetteError("silhouette has no figure pixels");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  /// Number of figure pixels.
  int area() const { return count_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  /// Figure membership; out-of-image pixels are background.
  bool at(int x, int y) const {
    return in_bounds(x, y) && bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }

  GrayImage to_image() const {
    GrayImage img(width_, height_);
    for (std::size_t i = 0; i < bits_.size(); ++i) img.pixels[i] = bits_[i] ? 255 : 0;
    return img;
  }

  friend bool operator==(const SilhouetteMask& a, const SilhouetteMask& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.bits_ == b.bits_;
  }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> bits_;
  int count_ = 0;
};

/// Keeps only the largest 8-connected component of a binary grid. Ties go
/// to the component found first in raster order.
inline std::vector<std::uint8_t> keep_largest_component(int w, int h,
                                                        const std::vector<std::uint8_t>& bits) {
  std::vector<int> label(bits.size(), -1);
  std::vector<int> stack;
  int best_label = -1;
  int best_size = 0;
  int next = 0;
  for (int start = 0; start < w * h; ++start) {
    if (!bits[start] || label[start] >= 0) continue;
    int size = 0;
    stack.push_back(start);
    label[start] = next;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      ++size;
      const int cx = cur % w, cy = cur / w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = cx + dx, ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int n = ny * w + nx;
          if (bits[n] && label[n] < 0) {
            label[n] = next;
            stack.push_back(n);
          }
        }
    }
    if (size > best_size) {
      best_size = size;
      best_label = next;
    }
    ++next;
  }
  std::vector<std::uint8_t> out(bits.size(), 0);
  for (std::size_t i = 0; i < bits.size(); ++i) out[i] = label[i] == best_label && best_label >= 0;
  return out;
}

/// Thresholds at 128 and keeps the largest 8-connected component.
inline SilhouetteMask mask_from_image(const GrayImage& img) {
  std::vector<std::uint8_t> bits(img.pixels.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = img.pixels[i] >= 128;
  bool any = std::any_of(bits.begin(), bits.end(), [](auto b) { return b != 0; });
  if (!any) throw EmptySilhouetteError("silhouette image is all background");
  return SilhouetteMask(img.width, img.height, keep_largest_component(img.width, img.height, bits));
}

/// Decodes a PGM (P5) or grayscale PNG mask.
inline SilhouetteMask load_mask(std::span<const std::uint8_t> bytes) {
  return mask_from_image(decode_gray(bytes));
}

inline std::vector<std::uint8_t> encode_mask_pgm(const SilhouetteMask& mask) {
  return encode_pgm(mask.to_image());
}

/// Nearest-pixel membership test. Coordinates round half away from zero.
inline bool is_inside(const SilhouetteMask& mask, Point2 p) {
  if (!is_finite(p)) return false;
  const double rx = std::round(p.x), ry = std::round(p.y);
  if (rx < 0 || ry < 0 || rx >= mask.width() || ry >= mask.height()) return false;
  return mask.at(static_cast<int>(rx), static_cast<int>(ry));
}

/// Signed Euclidean distance in pixels: negative inside, positive outside,
/// zero on boundary pixels (figure pixels 8-adjacent to background or to the
/// image border).
class DistanceField {
 public:
  DistanceField(int w, int h, std::vector<double> values)
      : width_(w), height_(h), values_(std::move(values)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<double>& values() const { return values_; }
  double at(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }

  /// Bilinear interpolation. Outside the grid the field grows with the
  /// distance to the clamped point.
  double sample(Point2 p) const {
    const double cx = std::clamp(p.x, 0.0, static_cast<double>(width_ - 1));
    const double cy = std::clamp(p.y, 0.0, static_cast<double>(height_ - 1));
    const int x0 = std::min(static_cast<int>(std::floor(cx)), std::max(width_ - 2, 0));
    const int y0 = std::min(static_cast<int>(std::floor(cy)), std::max(height_ - 2, 0));
    const double fx = cx - x0, fy = cy - y0;
    const double v00 = at(x0, y0), v10 = at(x0 + 1, y0), v01 = at(x0, y0 + 1),
                 v11 = at(x0 + 1, y0 + 1);
    const double v = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
    return v + std::hypot(p.x - cx, p.y - cy);
  }

  /// Central-difference gradient of the interpolated field (1 px step).
  Point2 gradient(Point2 p) const {
    return {(sample({p.x + 1, p.y}) - sample({p.x - 1, p.y})) / 2.0,
            (sample({p.x, p.y + 1}) - sample({p.x, p.y - 1})) / 2.0};
  }

 private:
  int width_;
  int height_;
  std::vector<double> values_;
};

namespace detail {

/// One-dimensional squared distance transform by lower envelope of parabolas.
/// f holds 0 at sites and +inf elsewhere; results go to d.
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;  // z[0] is -inf, so k stays >= 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

/// Exact squared Euclidean distance to the nearest site pixel.
inline std::vector<double> squared_edt(int w, int h, const std::vector<std::uint8_t>& sites) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites[i] ? 0.0 : inf;
  const int n = std::max(w, h);
  std::vector<double> f, d;
  std::vector<int> v(n + 1);
  std::vector<double> z(n + 2);
  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[x];
  }
  return grid;
}

}  // namespace detail

/// Figure pixels that touch background (8-neighbourhood) or the image border.
inline std::vector<std::uint8_t> boundary_pixels(const SilhouetteMask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx)
          if (!mask.at(x + dx, y + dy)) edge = true;
      out[static_cast<std::size_t>(y) * w + x] = edge;
    }
  return out;
}

inline DistanceField signed_distance(const SilhouetteMask& mask) {
  const int w = mask.width(), h = mask.height();
  const auto boundary = boundary_pixels(mask);
  const auto to_boundary = detail::squared_edt(w, h, boundary);
  const auto to_figure = detail::squared_edt(w, h, mask.bits());
  std::vector<double> values(to_boundary.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = mask.bits()[i] ? -std::sqrt(to_boundary[i]) : std::sqrt(to_figure[i]);
  return DistanceField(w, h, std::move(values));
}

/// Center of the figure pixel nearest to p (ties broken in raster order).
inline Point2 nearest_figure_pixel(const SilhouetteMask& mask, const DistanceField& field, Point2 p) {
  const int r = static_cast<int>(std::ceil(std::max(field.sample(p), 0.0))) + 2;
  const int cx = static_cast<int>(std::round(p.x)), cy = static_cast<int>(std::round(p.y));
  double best = std::numeric_limits<double>::infinity();
  Point2 best_p = p;
  auto scan = [&](int x0, int y0, int x1, int y1) {
    for (int y = std::max(y0, 0); y <= std::min(y1, mask.height() - 1); ++y)
      for (int x = std::max(x0, 0); x <= std::min(x1, mask.width() - 1); ++x) {
        if (!mask.at(x, y)) continue;
        const double d = squared_norm(Point2{double(x), double(y)} - p);
        if (d < best) {
          best = d;
          best_p = {double(x), double(y)};
        }
      }
  };
  scan(cx - r, cy - r, cx + r, cy + r);
  if (!std::isfinite(best)) scan(0, 0, mask.width() - 1, mask.height() - 1);
  return best_p;
}

}  // namespace meshtrack
