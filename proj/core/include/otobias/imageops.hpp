#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace otobias {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(Rgb, Rgb) = default;
};

// 8-bit HSV: hue in half-degrees [0, 180), saturation and value in [0, 255].
struct Hsv {
  std::uint8_t h = 0;
  std::uint8_t s = 0;
  std::uint8_t v = 0;

  friend bool operator==(Hsv, Hsv) = default;
};

// Unquantized HSV on the same scale as Hsv.
struct HsvReal {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

// Row-major 8-bit RGB image.
class ImageBuffer {
 public:
  // Throws ValidationError if a dimension is zero or pixels.size() != w*h*3.
  ImageBuffer(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels);
  ImageBuffer(std::size_t width, std::size_t height, Rgb fill);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t pixel_count() const { return width_ * height_; }

  Rgb at(std::size_t x, std::size_t y) const {
    const std::size_t o = (y * width_ + x) * 3;
    return {pixels_[o], pixels_[o + 1], pixels_[o + 2]};
  }
  void set(std::size_t x, std::size_t y, Rgb c) {
    const std::size_t o = (y * width_ + x) * 3;
    pixels_[o] = c.r;
    pixels_[o + 1] = c.g;
    pixels_[o + 2] = c.b;
  }

  std::span<const std::uint8_t> bytes() const { return pixels_; }
  std::span<std::uint8_t> bytes() { return pixels_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
};

// Elliptical occlusion. The ellipse has semi-axes extent*W/2 and extent*H/2
// around `center` (image center by default); extent 0 masks nothing and
// extent 1 is the inscribed ellipse.
struct MaskSpec {
  double eclipse_extent = 0.0;
  std::optional<PixelPoint> center;

  // Throws ValidationError if the extent is outside [0, 1] (or not finite)
  // or the center lies outside the image.
  void validate(const ImageBuffer& image) const;
};

// True when the center of pixel (x, y) lies inside the closed ellipse.
bool in_eclipse(const MaskSpec& spec, std::size_t width, std::size_t height, std::size_t x,
                std::size_t y);

// Copy of `image` with every pixel whose center is inside the ellipse set
// to black. Hard edge, no anti-aliasing.
ImageBuffer eclipse_mask(const ImageBuffer& image, const MaskSpec& spec);

HsvReal rgb_to_hsv_real(Rgb pixel);

// Hexcone HSV rounded to the 8-bit convention. Hue is 0 for achromatic
// pixels and wraps 180 back to 0.
Hsv rgb_to_hsv(Rgb pixel);

struct HsvFeatures {
  std::string id;
  double hue_mean = 0.0;
  double hue_std = 0.0;
  double sat_mean = 0.0;
  double sat_std = 0.0;
  double val_mean = 0.0;
  double val_std = 0.0;

  static constexpr std::array<std::string_view, 6> kNames = {
      "hue_mean", "hue_std", "sat_mean", "sat_std", "val_mean", "val_std"};

  std::array<double, 6> values() const {
    return {hue_mean, hue_std, sat_mean, sat_std, val_mean, val_std};
  }
};

// Per-channel mean and population standard deviation of the 8-bit HSV image.
// Sums are accumulated exactly in integers, so results are independent of
// pixel order.
HsvFeatures hsv_features(const ImageBuffer& image, std::string id = {});

}  // namespace otobias
