#include "fgssl/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fgssl/errors.hpp"
#include "fgssl/rng.hpp"

namespace fgssl {

ImageTensor::ImageTensor(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw ShapeError("image dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height <= 0 || width <= 0 || channels <= 0 ||
      data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("image buffer does not match " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
  }
}

ImageTensor ImageTensor::crop(int y0, int x0, int h, int w) const {
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > height_ || x0 + w > width_) {
    throw ShapeError("crop region out of bounds");
  }
  ImageTensor out(h, w, channels_);
  const std::size_t row = static_cast<std::size_t>(w) * channels_;
  for (int y = 0; y < h; ++y) {
    std::memcpy(&out.data_[y * row], &data_[index(y0 + y, x0, 0)], row * sizeof(float));
  }
  return out;
}

void ImageTensor::paste(const ImageTensor& src, int y0, int x0) {
  if (src.channels_ != channels_ || y0 < 0 || x0 < 0 || y0 + src.height_ > height_ ||
      x0 + src.width_ > width_) {
    throw ShapeError("paste region out of bounds");
  }
  const std::size_t row = static_cast<std::size_t>(src.width_) * channels_;
  for (int y = 0; y < src.height_; ++y) {
    std::memcpy(&data_[index(y0 + y, x0, 0)], &src.data_[y * row], row * sizeof(float));
  }
}

bool ImageTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool ImageTensor::in_unit_range() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

bool operator==(const ImageTensor& a, const ImageTensor& b) {
  return a.height_ == b.height_ && a.width_ == b.width_ && a.channels_ == b.channels_ &&
         (a.data_.empty() ||
          std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0);
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw ShapeError("resize target must be positive");
  if (out_height == img.height() && out_width == img.width()) return img;
  const int c = img.channels();
  ImageTensor out(out_height, out_width, c);
  const double sy = static_cast<double>(img.height()) / out_height;
  const double sx = static_cast<double>(img.width()) / out_width;
  for (int y = 0; y < out_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < out_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const float wx = static_cast<float>(fx - x0);
      for (int k = 0; k < c; ++k) {
        const float top = img.at(y0, x0, k) * (1 - wx) + img.at(y0, x1, k) * wx;
        const float bot = img.at(y1, x0, k) * (1 - wx) + img.at(y1, x1, k) * wx;
        out.at(y, x, k) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

ImageTensor read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw InputError("cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  ImageTensor out(rgb.rows, rgb.cols, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.cols; ++x) {
      for (int k = 0; k < 3; ++k) out.at(y, x, k) = row[x][k] / 255.0f;
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const ImageTensor& img) {
  const int c = img.channels();
  if (c != 1 && c != 3) throw ShapeError("PNG output needs 1 or 3 channels");
  cv::Mat mat(img.height(), img.width(), c == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int k = 0; k < c; ++k) {
        const float v = std::clamp(img.at(y, x, k), 0.0f, 1.0f);
        // RGB -> BGR for OpenCV
        const int dst = c == 3 ? 2 - k : 0;
        row[x * c + dst] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw InputError("cannot write " + path.string());
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& state) {
  std::istringstream is(state);
  Rng rng;
  is >> rng;
  if (!is) throw CheckpointError("corrupt RNG state");
  return rng;
}

}  // namespace fgssl
