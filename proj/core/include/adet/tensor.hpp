#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace adet {

// Dense channel-major (C, H, W) block of doubles.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int channels, int height, int width, double fill = 0.0);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Tensor3& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double value);
  Tensor3& operator+=(const Tensor3& other);
  Tensor3& operator*=(double scale);

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Axis-aligned box in pixel coordinates, (x1, y1) top-left, (x2, y2) bottom-right.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return (x2 > x1 && y2 > y1) ? (x2 - x1) * (y2 - y1) : 0.0; }
  bool valid() const noexcept { return x1 < x2 && y1 < y2; }

  friend bool operator==(const Box&, const Box&) = default;
};

Box clip_box(const Box& box, double width, double height);

// RGB image with values in [0, 1]; stored as a 3-channel Tensor3.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0);
  // Throws kInvalidInput if the tensor is not 3-channel or a value leaves [0, 1].
  explicit Image(Tensor3 pixels);

  int height() const noexcept { return pixels_.height(); }
  int width() const noexcept { return pixels_.width(); }
  const Tensor3& pixels() const noexcept { return pixels_; }
  Tensor3& mutable_pixels() noexcept { return pixels_; }

  double at(int channel, int y, int x) const { return pixels_.at(channel, y, x); }
  double& at(int channel, int y, int x) { return pixels_.at(channel, y, x); }

  // Re-checks the [0, 1] range after in-place edits.
  void validate() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  Tensor3 pixels_;
};

struct FeatureMap {
  Tensor3 activations;
  int stride = 1;
  int image_height = 0;
  int image_width = 0;

  int height() const noexcept { return activations.height(); }
  int width() const noexcept { return activations.width(); }
  int channels() const noexcept { return activations.channels(); }
};

}  // namespace adet
