#include "adet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "adet/error.hpp"

namespace adet {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kContract: return "contract violation";
    case ErrorKind::kConfiguration: return "configuration error";
    case ErrorKind::kMode: return "mode error";
    case ErrorKind::kNotInitialized: return "not initialized";
    case ErrorKind::kNonFiniteGradient: return "non-finite gradient";
    case ErrorKind::kNonFiniteLoss: return "non-finite loss";
    case ErrorKind::kIngestion: return "ingestion error";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

Tensor3::Tensor3(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  require(channels >= 0 && height >= 0 && width >= 0, ErrorKind::kInvalidInput, "negative tensor extent");
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

void Tensor3::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor3& Tensor3::operator+=(const Tensor3& other) {
  require(same_shape(other), ErrorKind::kContract, "tensor shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor3& Tensor3::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

Box clip_box(const Box& box, double width, double height) {
  return Box{std::clamp(box.x1, 0.0, width), std::clamp(box.y1, 0.0, height),
             std::clamp(box.x2, 0.0, width), std::clamp(box.y2, 0.0, height)};
}

Image::Image(int height, int width, double fill) : pixels_(3, height, width, fill) {
  require(height > 0 && width > 0, ErrorKind::kInvalidInput, "image extents must be positive");
  validate();
}

Image::Image(Tensor3 pixels) : pixels_(std::move(pixels)) {
  require(pixels_.channels() == 3, ErrorKind::kInvalidInput, "image must have 3 channels");
  require(pixels_.height() > 0 && pixels_.width() > 0, ErrorKind::kInvalidInput,
          "image extents must be positive");
  validate();
}

void Image::validate() const {
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorKind::kInvalidInput, "pixel value outside [0, 1]: " + std::to_string(v));
    }
  }
}

}  // namespace adet
