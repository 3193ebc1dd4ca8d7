#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fgssl {

// H x W x C image stored row-major, channels interleaved. Pixel-domain
// images are kept in [0,1]; normalized images (after eval_transform) are not.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, float fill = 0.0f);
  ImageTensor(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  // Copies a rectangular region.
  ImageTensor crop(int y0, int x0, int h, int w) const;
  // Writes `src` with its top-left corner at (y0, x0).
  void paste(const ImageTensor& src, int y0, int x0);

  bool all_finite() const;
  bool in_unit_range() const;

  // Bitwise equality (NaN payloads and signed zeros included).
  friend bool operator==(const ImageTensor& a, const ImageTensor& b);

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Bilinear resampling (half-pixel centers, edge clamped).
ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width);

// Decodes any format OpenCV reads into an RGB image in [0,1].
ImageTensor read_image(const std::filesystem::path& path);
// Writes an image in [0,1] as 8-bit PNG (RGB or gray).
void write_png(const std::filesystem::path& path, const ImageTensor& img);

}  // namespace fgssl
