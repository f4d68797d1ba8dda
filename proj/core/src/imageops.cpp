#include "otobias/imageops.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "otobias/error.hpp"

namespace otobias {

ImageBuffer::ImageBuffer(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width_ == 0 || height_ == 0) {
    throw ValidationError(fmt::format("image dimensions {}x{} must be positive", width_, height_));
  }
  if (pixels_.size() != width_ * height_ * 3) {
    throw ValidationError(fmt::format("{}x{} image needs {} bytes, got {}", width_, height_,
                                      width_ * height_ * 3, pixels_.size()));
  }
}

ImageBuffer::ImageBuffer(std::size_t width, std::size_t height, Rgb fill)
    : ImageBuffer(width, height, std::vector<std::uint8_t>(width * height * 3)) {
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

void MaskSpec::validate(const ImageBuffer& image) const {
  if (!(eclipse_extent >= 0.0 && eclipse_extent <= 1.0)) {
    throw ValidationError(fmt::format("eclipse extent {} is outside [0, 1]", eclipse_extent));
  }
  if (center) {
    const double w = static_cast<double>(image.width());
    const double h = static_cast<double>(image.height());
    if (!(center->x >= 0.0 && center->x <= w && center->y >= 0.0 && center->y <= h)) {
      throw ValidationError(
          fmt::format("mask center ({}, {}) lies outside the {}x{} image", center->x, center->y, w, h));
    }
  }
}

namespace {

struct Ellipse {
  double cx, cy, a, b;
};

Ellipse ellipse_of(const MaskSpec& spec, std::size_t width, std::size_t height) {
  const double w = static_cast<double>(width);
  const double h = static_cast<double>(height);
  const PixelPoint c = spec.center.value_or(PixelPoint{w / 2.0, h / 2.0});
  return {c.x, c.y, spec.eclipse_extent * w / 2.0, spec.eclipse_extent * h / 2.0};
}

double row_term(const Ellipse& e, std::size_t y) {
  const double dy = (static_cast<double>(y) + 0.5 - e.cy) / e.b;
  return dy * dy;
}

bool inside(const Ellipse& e, double ry, std::size_t x) {
  const double dx = (static_cast<double>(x) + 0.5 - e.cx) / e.a;
  return dx * dx + ry <= 1.0;
}

}  // namespace

bool in_eclipse(const MaskSpec& spec, std::size_t width, std::size_t height, std::size_t x, std::size_t y) {
  const Ellipse e = ellipse_of(spec, width, height);
  if (e.a <= 0.0 || e.b <= 0.0) return false;
  return inside(e, row_term(e, y), x);
}

ImageBuffer eclipse_mask(const ImageBuffer& image, const MaskSpec& spec) {
  spec.validate(image);
  ImageBuffer out = image;
  const Ellipse e = ellipse_of(spec, image.width(), image.height());
  if (e.a <= 0.0 || e.b <= 0.0) return out;

  auto bytes = out.bytes();
  for (std::size_t y = 0; y < image.height(); ++y) {
    const double ry = row_term(e, y);
    if (ry > 1.0) continue;
    std::uint8_t* row = bytes.data() + y * image.width() * 3;
    for (std::size_t x = 0; x < image.width(); ++x) {
      if (inside(e, ry, x)) std::fill_n(row + x * 3, 3, std::uint8_t{0});
    }
  }
  return out;
}

HsvReal rgb_to_hsv_real(Rgb pixel) {
  const int r = pixel.r, g = pixel.g, b = pixel.b;
  const int hi = std::max({r, g, b});
  const int lo = std::min({r, g, b});
  const int delta = hi - lo;

  HsvReal out;
  out.v = hi;
  if (hi == 0 || delta == 0) return out;
  out.s = 255.0 * delta / hi;

  double degrees;
  if (hi == r) {
    degrees = 60.0 * (g - b) / delta;
  } else if (hi == g) {
    degrees = 120.0 + 60.0 * (b - r) / delta;
  } else {
    degrees = 240.0 + 60.0 * (r - g) / delta;
  }
  if (degrees < 0.0) degrees += 360.0;
  out.h = degrees / 2.0;
  return out;
}

Hsv rgb_to_hsv(Rgb pixel) {
  const HsvReal real = rgb_to_hsv_real(pixel);
  const auto s = static_cast<int>(std::lround(real.s));
  auto h = static_cast<int>(std::lround(real.h));
  if (h >= 180 || s == 0) h = 0;
  return {static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(s), static_cast<std::uint8_t>(real.v)};
}

namespace {

// Exact moments of one 8-bit channel: n*sum(x^2) - sum(x)^2 is an integer,
// so the variance carries a single rounding.
void moments(unsigned long long n, unsigned long long sum, unsigned long long sum_sq, double& mean,
             double& std) {
  __extension__ using u128 = unsigned __int128;
  const auto nn = static_cast<u128>(n);
  const u128 scatter = nn * sum_sq - static_cast<u128>(sum) * sum;
  mean = static_cast<double>(sum) / static_cast<double>(n);
  const double var = static_cast<double>(scatter) / (static_cast<double>(n) * static_cast<double>(n));
  std = std::sqrt(var);
}

}  // namespace

HsvFeatures hsv_features(const ImageBuffer& image, std::string id) {
  unsigned long long sum[3] = {0, 0, 0};
  unsigned long long sum_sq[3] = {0, 0, 0};
  const auto bytes = image.bytes();
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const Hsv p = rgb_to_hsv({bytes[i], bytes[i + 1], bytes[i + 2]});
    const unsigned long long c[3] = {p.h, p.s, p.v};
    for (int k = 0; k < 3; ++k) {
      sum[k] += c[k];
      sum_sq[k] += c[k] * c[k];
    }
  }
  HsvFeatures f;
  f.id = std::move(id);
  const unsigned long long n = image.pixel_count();
  moments(n, sum[0], sum_sq[0], f.hue_mean, f.hue_std);
  moments(n, sum[1], sum_sq[1], f.sat_mean, f.sat_std);
  moments(n, sum[2], sum_sq[2], f.val_mean, f.val_std);
  return f;
}

}  // namespace otobias
