#include "fgssl/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fgssl/errors.hpp"

namespace fgssl::augment {

namespace {

constexpr int kCropTries = 10;
constexpr int kMinEvalSide = 32;

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void check_op(const std::string& name, const AugmentOp& op) {
  if (!(op.probability >= 0.0 && op.probability <= 1.0)) {
    throw ConfigError("augmentation op '" + name + "' probability must be in [0,1]");
  }
  if (!(op.lo <= op.hi)) throw ConfigError("augmentation op '" + name + "' has lo > hi");
}

bool fires(const AugmentOp& op, Rng& rng) {
  if (op.probability <= 0.0) return false;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < op.probability;
}

double draw(double lo, double hi, Rng& rng) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.0f ? d / mx : 0.0f;
  if (d <= 0.0f) {
    h = 0.0f;
    return;
  }
  if (mx == r) {
    h = (g - b) / d;
  } else if (mx == g) {
    h = 2.0f + (b - r) / d;
  } else {
    h = 4.0f + (r - g) / d;
  }
  h /= 6.0f;
  if (h < 0.0f) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  h = h - std::floor(h);
  const float f6 = h * 6.0f;
  const int sector = static_cast<int>(f6) % 6;
  const float f = f6 - std::floor(f6);
  const float p = v * (1 - s);
  const float q = v * (1 - s * f);
  const float t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

ImageTensor random_resized_crop(const ImageTensor& img, const AugmentationPolicy& p, Rng& rng) {
  const int h = img.height();
  const int w = img.width();
  const double area = static_cast<double>(h) * w;
  const double log_lo = std::log(p.crop_ratio_lo);
  const double log_hi = std::log(p.crop_ratio_hi);
  for (int attempt = 0; attempt < kCropTries; ++attempt) {
    const double target = area * draw(p.resized_crop.lo, p.resized_crop.hi, rng);
    const double ratio = std::exp(draw(log_lo, log_hi, rng));
    const int cw = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int ch = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (cw > 0 && ch > 0 && cw <= w && ch <= h) {
      const int y0 = std::uniform_int_distribution<int>(0, h - ch)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, w - cw)(rng);
      return resize_bilinear(img.crop(y0, x0, ch, cw), h, w);
    }
  }
  // Fallback: largest centered crop whose aspect ratio lies in range.
  const double in_ratio = static_cast<double>(w) / h;
  int cw = w;
  int ch = h;
  if (in_ratio < p.crop_ratio_lo) {
    ch = static_cast<int>(std::lround(w / p.crop_ratio_lo));
  } else if (in_ratio > p.crop_ratio_hi) {
    cw = static_cast<int>(std::lround(h * p.crop_ratio_hi));
  }
  ch = std::clamp(ch, 1, h);
  cw = std::clamp(cw, 1, w);
  return resize_bilinear(img.crop((h - ch) / 2, (w - cw) / 2, ch, cw), h, w);
}

}  // namespace

AugmentationPolicy AugmentationPolicy::identity() {
  AugmentationPolicy p;
  p.resized_crop = {0.0, 1.0, 1.0};
  p.crop_ratio_lo = p.crop_ratio_hi = 1.0;
  p.flip.probability = 0.0;
  p.color_jitter.probability = 0.0;
  p.grayscale.probability = 0.0;
  p.blur.probability = 0.0;
  p.solarize.probability = 0.0;
  return p;
}

std::vector<std::pair<std::string, AugmentOp>> AugmentationPolicy::ops() const {
  return {{"resized_crop", resized_crop}, {"flip", flip},           {"color_jitter", color_jitter},
          {"grayscale", grayscale},       {"blur", blur},           {"solarize", solarize}};
}

void AugmentationPolicy::validate() const {
  for (const auto& [name, op] : ops()) check_op(name, op);
  if (!(resized_crop.lo > 0.0 && resized_crop.hi <= 1.0)) {
    throw ConfigError("resized_crop scale range must lie in (0,1]");
  }
  if (!(crop_ratio_lo > 0.0 && crop_ratio_lo <= crop_ratio_hi)) {
    throw ConfigError("crop aspect-ratio range is invalid");
  }
  if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0 || hue > 0.5) {
    throw ConfigError("color jitter strengths must be >= 0 and hue <= 0.5");
  }
  if (blur.lo < 0.0) throw ConfigError("blur sigma must be >= 0");
}

ImageTensor hflip(const ImageTensor& img) {
  ImageTensor out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
    }
  }
  return out;
}

ImageTensor to_grayscale(const ImageTensor& img) {
  if (img.channels() != 3) return img;
  ImageTensor out(img.height(), img.width(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float g = clamp01(luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)));
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = g;
    }
  }
  return out;
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-(k * k) / (2.0 * sigma * sigma));
    kernel[k + radius] = static_cast<float>(v);
    total += v;
  }
  for (auto& k : kernel) k = static_cast<float>(k / total);

  const int h = img.height();
  const int w = img.width();
  const int ch = img.channels();
  ImageTensor tmp(h, w, ch);
  ImageTensor out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * img.at(y, reflect101(x + k, w), c);
        tmp.at(y, x, c) = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(reflect101(y + k, h), x, c);
        out.at(y, x, c) = clamp01(acc);
      }
    }
  }
  return out;
}

ImageTensor solarize(const ImageTensor& img, double threshold) {
  ImageTensor out = img;
  for (float& v : out.data()) {
    if (v >= threshold) v = 1.0f - v;
  }
  return out;
}

ImageTensor adjust_color(const ImageTensor& img, double brightness, double contrast,
                         double saturation, double hue_shift) {
  ImageTensor out = img;
  auto px = out.data();
  for (float& v : px) v = clamp01(static_cast<float>(v * brightness));

  if (out.channels() == 3) {
    double mean = 0.0;
    for (std::size_t i = 0; i < px.size(); i += 3) mean += luma(px[i], px[i + 1], px[i + 2]);
    mean /= static_cast<double>(px.size() / 3);
    for (float& v : px) v = clamp01(static_cast<float>((v - mean) * contrast + mean));

    for (std::size_t i = 0; i < px.size(); i += 3) {
      const float g = luma(px[i], px[i + 1], px[i + 2]);
      for (int c = 0; c < 3; ++c) {
        px[i + c] = clamp01(static_cast<float>((px[i + c] - g) * saturation + g));
      }
    }
    if (hue_shift != 0.0) {
      for (std::size_t i = 0; i < px.size(); i += 3) {
        float h, s, v;
        rgb_to_hsv(px[i], px[i + 1], px[i + 2], h, s, v);
        hsv_to_rgb(h + static_cast<float>(hue_shift), s, v, px[i], px[i + 1], px[i + 2]);
        for (int c = 0; c < 3; ++c) px[i + c] = clamp01(px[i + c]);
      }
    }
  } else {
    double mean = 0.0;
    for (float v : px) mean += v;
    mean /= static_cast<double>(px.size());
    for (float& v : px) v = clamp01(static_cast<float>((v - mean) * contrast + mean));
  }
  return out;
}

ImageTensor distort(const ImageTensor& img, const AugmentationPolicy& policy, Rng& rng) {
  ImageTensor out = fires(policy.resized_crop, rng) ? random_resized_crop(img, policy, rng) : img;
  if (fires(policy.flip, rng)) out = hflip(out);
  if (fires(policy.color_jitter, rng)) {
    const double b = draw(std::max(0.0, 1 - policy.brightness), 1 + policy.brightness, rng);
    const double c = draw(std::max(0.0, 1 - policy.contrast), 1 + policy.contrast, rng);
    const double s = draw(std::max(0.0, 1 - policy.saturation), 1 + policy.saturation, rng);
    const double h = draw(-policy.hue, policy.hue, rng);
    out = adjust_color(out, b, c, s, h);
  }
  if (fires(policy.grayscale, rng)) out = to_grayscale(out);
  if (fires(policy.blur, rng)) out = gaussian_blur(out, draw(policy.blur.lo, policy.blur.hi, rng));
  if (fires(policy.solarize, rng)) out = solarize(out, draw(policy.solarize.lo, policy.solarize.hi, rng));
  for (float& v : out.data()) v = clamp01(v);
  return out;
}

ImageTensor resize_center_crop(const ImageTensor& img, int resize, int crop) {
  if (img.height() < kMinEvalSide || img.width() < kMinEvalSide) {
    throw InputError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                     " is smaller than 32x32");
  }
  if (crop > resize) throw ConfigError("center crop larger than resize target");
  int h = resize;
  int w = resize;
  if (img.height() < img.width()) {
    w = static_cast<int>(std::lround(static_cast<double>(img.width()) * resize / img.height()));
  } else if (img.width() < img.height()) {
    h = static_cast<int>(std::lround(static_cast<double>(img.height()) * resize / img.width()));
  }
  const ImageTensor resized = resize_bilinear(img, h, w);
  return resized.crop((h - crop) / 2, (w - crop) / 2, crop, crop);
}

ImageTensor normalize(const ImageTensor& img, const std::array<float, 3>& mean,
                      const std::array<float, 3>& stddev) {
  ImageTensor out = img;
  const int ch = img.channels();
  if (ch > 3) throw ShapeError("normalization supports up to 3 channels");
  auto px = out.data();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const int c = static_cast<int>(i % ch);
    px[i] = (px[i] - mean[c]) / stddev[c];
  }
  return out;
}

ImageTensor eval_transform(const ImageTensor& img, const EvalTransform& t) {
  return normalize(resize_center_crop(img, t.resize, t.crop), t.mean, t.stddev);
}

}  // namespace fgssl::augment
