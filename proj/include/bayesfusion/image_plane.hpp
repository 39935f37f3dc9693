#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bayesfusion/errors.hpp"

namespace bfuse {

/// Intensity convention of a plane: [0,1] or [0,255].
enum class Scale { unit, byte };

inline constexpr double max_intensity(Scale s) noexcept {
  return s == Scale::unit ? 1.0 : 255.0;
}

inline std::string to_string(Scale s) { return s == Scale::unit ? "unit" : "byte"; }

/// Row-major h x w matrix of doubles. Both sides must be at least 2 so that
/// forward differences have two samples per axis.
class ImagePlane {
 public:
  ImagePlane() = default;

  ImagePlane(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(height * width, fill);
  }

  ImagePlane(std::size_t height, std::size_t width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    check_dims(height, width);
    if (data_.size() != height * width)
      throw invalid_input("ImagePlane: data size " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(height) + "x" +
                          std::to_string(width));
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * width_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * width_ + j];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const ImagePlane& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const ImagePlane&) const = default;

 private:
  static void check_dims(std::size_t h, std::size_t w) {
    if (h < 2 || w < 2)
      throw invalid_input("ImagePlane: dimensions must be at least 2x2, got " +
                          std::to_string(h) + "x" + std::to_string(w));
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

/// Horizontal and vertical forward differences of a plane.
struct GradientField {
  ImagePlane dx;
  ImagePlane dy;

  GradientField() = default;
  GradientField(std::size_t height, std::size_t width)
      : dx(height, width), dy(height, width) {}
  GradientField(ImagePlane x, ImagePlane y) : dx(std::move(x)), dy(std::move(y)) {
    if (!dx.same_shape(dy)) throw invalid_input("GradientField: channel shapes differ");
  }

  std::size_t height() const noexcept { return dx.height(); }
  std::size_t width() const noexcept { return dx.width(); }

  bool operator==(const GradientField&) const = default;
};

inline void require_same_shape(const ImagePlane& a, const ImagePlane& b, const char* what) {
  if (!a.same_shape(b))
    throw invalid_input(std::string(what) + ": dimension mismatch (" +
                        std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                        std::to_string(b.height()) + "x" + std::to_string(b.width()) + ")");
}

}  // namespace bfuse
