#include "adet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "adet/error.hpp"

namespace adet {

namespace {

const std::vector<int> kPngParams{cv::IMWRITE_PNG_COMPRESSION, 6, cv::IMWRITE_PNG_STRATEGY,
                                  cv::IMWRITE_PNG_STRATEGY_DEFAULT};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  require(!bgr.empty(), ErrorKind::kIo, "cannot read image " + path.string());
  Tensor3 t(3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = row[x][2 - c] / 255.0;
  }
  return Image(std::move(t));
}

void write_image(const std::filesystem::path& path, const Image& image) {
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) row[x][2 - c] = to_byte(image.at(c, y, x));
  }
  ensure_parent(path);
  require(cv::imwrite(path.string(), bgr, kPngParams), ErrorKind::kIo, "cannot write image " + path.string());
}

RainMap read_rain_map(const std::filesystem::path& path) {
  const cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH);
  require(!gray.empty(), ErrorKind::kIo, "cannot read rain map " + path.string());
  RainMap map(gray.rows, gray.cols);
  const bool wide = gray.depth() == CV_16U;
  const double scale = wide ? 1.0 / 65535.0 : 1.0 / 255.0;
  for (int y = 0; y < gray.rows; ++y)
    for (int x = 0; x < gray.cols; ++x)
      map.at(y, x) = (wide ? gray.at<std::uint16_t>(y, x) : gray.at<std::uint8_t>(y, x)) * scale;
  return map;
}

void write_rain_map(const std::filesystem::path& path, const RainMap& map) {
  cv::Mat gray(map.height, map.width, CV_8UC1);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) gray.at<std::uint8_t>(y, x) = to_byte(map.at(y, x));
  ensure_parent(path);
  require(cv::imwrite(path.string(), gray, kPngParams), ErrorKind::kIo, "cannot write rain map " + path.string());
}

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (double& v : out.mutable_pixels().values()) v = to_byte(v) / 255.0;
  return out;
}

}  // namespace adet
