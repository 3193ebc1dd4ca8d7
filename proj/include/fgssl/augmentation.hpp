#pragma once

#include <array>
#include <string>
#include <vector>

#include "fgssl/image.hpp"
#include "fgssl/rng.hpp"

namespace fgssl::augment {

// One stochastic stage of the distortion pipeline: it fires with
// `probability`, and its parameter is drawn from [lo, hi] where meaningful.
struct AugmentOp {
  double probability = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Ordered distortion recipe for the augmented-original branch. Ops run in
// declaration order; see ops() for the names used in config files.
struct AugmentationPolicy {
  AugmentOp resized_crop{1.0, 0.6, 1.0};  // area scale range
  double crop_ratio_lo = 3.0 / 4.0;
  double crop_ratio_hi = 4.0 / 3.0;
  AugmentOp flip{0.5};
  AugmentOp color_jitter{0.8};
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  AugmentOp grayscale{0.2};
  AugmentOp blur{0.5, 0.1, 2.0};          // sigma range in pixels
  AugmentOp solarize{0.1, 0.5, 0.5};      // threshold range
  std::uint64_t seed = 0;

  // Policy with every stochastic op disabled and the crop fixed to the full
  // frame: distort() is then the identity.
  static AugmentationPolicy identity();
  // Throws ConfigError when a probability or range is invalid.
  void validate() const;
  std::vector<std::pair<std::string, AugmentOp>> ops() const;
};

// Distorted view. Shape is preserved and values stay in [0,1]. Crops with a
// degenerate region are redrawn up to 10 times, then the center crop is used.
ImageTensor distort(const ImageTensor& img, const AugmentationPolicy& policy, Rng& rng);

struct EvalTransform {
  int resize = 256;  // shorter side after resizing
  int crop = 224;
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> stddev{0.5f, 0.5f, 0.5f};
};

// Shorter side to `resize`, then center crop to crop x crop. Values keep the
// [0,1] pixel domain. Throws InputError for images under 32x32.
ImageTensor resize_center_crop(const ImageTensor& img, int resize, int crop);
// (x - mean[c]) / std[c] per channel.
ImageTensor normalize(const ImageTensor& img, const std::array<float, 3>& mean,
                      const std::array<float, 3>& stddev);
ImageTensor eval_transform(const ImageTensor& img, const EvalTransform& t = {});

// Individual ops, exposed for tests and for the fine-tuning pipeline.
ImageTensor hflip(const ImageTensor& img);
ImageTensor to_grayscale(const ImageTensor& img);
ImageTensor gaussian_blur(const ImageTensor& img, double sigma);
ImageTensor solarize(const ImageTensor& img, double threshold);
ImageTensor adjust_color(const ImageTensor& img, double brightness, double contrast,
                         double saturation, double hue_shift);

}  // namespace fgssl::augment
