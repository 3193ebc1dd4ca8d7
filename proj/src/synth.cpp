#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "fgssl/data_pipeline.hpp"
#include "fgssl/errors.hpp"
#include "fgssl/rng.hpp"

namespace fgssl::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Widths are chosen so that every class shape covers the same area (about
// 0.34 cell^2): class identity is in the geometry, not in how much ink an
// image carries.
constexpr double kBarHalfLength = 0.38;
constexpr double kBarWidth = 0.174;
constexpr double kCrossWidth = 0.113;
constexpr double kRingRadius = 0.24;
constexpr double kRingWidth = 0.09;
constexpr double kBlobSigma = 0.16;
constexpr double kNoiseSigma = 0.04;
constexpr double kWaveAmplitude = 0.03;

struct Rgb {
  float r, g, b;
};

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Near-black ink with a little per-object variation.
Rgb ink_color(Rng& rng) {
  return {static_cast<float>(uniform(rng, 0.08, 0.14)), static_cast<float>(uniform(rng, 0.08, 0.14)),
          static_cast<float>(uniform(rng, 0.08, 0.14))};
}

// Background shared by every image: mid-gray with one fixed diagonal wave,
// plus per-pixel sensor noise. Any per-image global cue (tint, gradient)
// would be the easiest thing for a self-supervised objective to latch onto,
// so the objects carry all of the image-to-image variation.
void paint_background(ImageTensor& img, Rng& rng) {
  std::normal_distribution<float> noise(0.0f, static_cast<float>(kNoiseSigma));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double t = static_cast<double>(y) / img.height() + static_cast<double>(x) / img.width();
      const float shade = static_cast<float>(0.5 + kWaveAmplitude * std::sin(2.0 * std::numbers::pi * t));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = shade + noise(rng);
    }
  }
}

// Motif shapes as a soft coverage field w(dy, dx) in [0, 1], with offsets in
// cell units (the cell spans [-0.5, 0.5]). Every class shape is symmetric
// under horizontal and vertical flips, so flip augmentation keeps labels.
enum class Shape { HBar, VBar, Cross, Ring, Blob };

double coverage(Shape shape, double dy, double dx) {
  auto bar = [](double along, double across, double width) {
    return std::exp(-0.5 * (std::pow(along / kBarHalfLength, 8.0) + across * across / (width * width)));
  };
  switch (shape) {
    case Shape::HBar: return bar(dx, dy, kBarWidth);
    case Shape::VBar: return bar(dy, dx, kBarWidth);
    case Shape::Cross: return std::max(bar(dx, dy, kCrossWidth), bar(dy, dx, kCrossWidth));
    case Shape::Ring: {
      const double r = std::hypot(dy, dx) - kRingRadius;
      return std::exp(-0.5 * r * r / (kRingWidth * kRingWidth));
    }
    case Shape::Blob: return std::exp(-0.5 * (dy * dy + dx * dx) / (kBlobSigma * kBlobSigma));
  }
  return 0.0;
}

// Alpha-blends a shape centered at (cy, cx) inside `clip`. Returns the
// bounding box of the visible footprint.
Box stamp(ImageTensor& img, Shape shape, double cy, double cx, double cell, const Rgb& color, double alpha,
          const Box& clip) {
  Box box{clip.y1, clip.x1, clip.y0, clip.x0};
  for (int y = clip.y0; y < clip.y1; ++y) {
    for (int x = clip.x0; x < clip.x1; ++x) {
      const double w = alpha * coverage(shape, (y + 0.5 - cy) / cell, (x + 0.5 - cx) / cell);
      if (w < 0.05) continue;
      const float a = static_cast<float>(w);
      img.at(y, x, 0) = img.at(y, x, 0) * (1 - a) + color.r * a;
      img.at(y, x, 1) = img.at(y, x, 1) * (1 - a) + color.g * a;
      img.at(y, x, 2) = img.at(y, x, 2) * (1 - a) + color.b * a;
      box.y0 = std::min(box.y0, y);
      box.x0 = std::min(box.x0, x);
      box.y1 = std::max(box.y1, y + 1);
      box.x1 = std::max(box.x1, x + 1);
    }
  }
  return box;
}

SyntheticSample make_sample(const SyntheticSpec& spec, int label, Rng& rng) {
  const int size = spec.image_size;
  // Motifs sit inside grid cells so no jigsaw grid up to max_granularity cuts one.
  const int cell = size / spec.max_granularity;
  const int cells_per_side = spec.max_granularity;
  SyntheticSample s;
  s.label = label;
  s.image = ImageTensor(size, size, 3);
  paint_background(s.image, rng);

  std::vector<int> cells(cells_per_side * cells_per_side);
  std::iota(cells.begin(), cells.end(), 0);
  std::shuffle(cells.begin(), cells.end(), rng);
  const int n_motifs = uniform_int(rng, 3, 6);
  const int n_distractors = uniform_int(rng, 2, 4);

  // Class k stamps shape k; distractors are round blobs in the same ink.
  const auto class_shape = static_cast<Shape>(label);
  for (int i = 0; i < n_motifs + n_distractors; ++i) {
    const int c = cells[i];
    const Box clip{(c / cells_per_side) * cell, (c % cells_per_side) * cell,
                   (c / cells_per_side + 1) * cell, (c % cells_per_side + 1) * cell};
    const double cy = clip.y0 + cell / 2.0 + uniform(rng, -0.5, 0.5);
    const double cx = clip.x0 + cell / 2.0 + uniform(rng, -0.5, 0.5);
    const Rgb color = ink_color(rng);
    const double alpha = uniform(rng, 0.85, 1.0);
    const bool motif = i < n_motifs;
    const Box box = stamp(s.image, motif ? class_shape : Shape::Blob, cy, cx, cell, color, alpha, clip);
    if (motif && box.y1 > box.y0 && box.x1 > box.x0) s.motif_boxes.push_back(box);
  }
  for (float& v : s.image.data()) v = std::clamp(v, 0.0f, 1.0f);
  return s;
}

}  // namespace

std::vector<SyntheticSample> synth_dataset(const SyntheticSpec& spec) {
  if (spec.num_classes < 2 || spec.num_classes > 4 || spec.per_class < 1) {
    throw ConfigError("synthetic data supports 2 to 4 classes with >= 1 sample each");
  }
  if (spec.max_granularity < 1 || spec.image_size % 32 != 0 || spec.image_size % spec.max_granularity != 0) {
    throw ConfigError("image size " + std::to_string(spec.image_size) +
                      " must be divisible by 32 and by the maximum granularity");
  }
  if (spec.image_size / spec.max_granularity < 6) {
    throw ConfigError("motif cells must be at least 6 pixels wide");
  }
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(spec.num_classes) * spec.per_class);
  for (int i = 0; i < spec.per_class; ++i) {
    for (int label = 0; label < spec.num_classes; ++label) {
      Rng rng = derive_rng(spec.seed, {static_cast<std::uint64_t>(label), static_cast<std::uint64_t>(i)});
      out.push_back(make_sample(spec, label, rng));
    }
  }
  return out;
}

DatasetManifest write_synthetic_dataset(const std::vector<SyntheticSample>& samples,
                                        const SyntheticSpec& spec, const fs::path& dir) {
  fs::create_directories(dir / "images");
  DatasetManifest m;
  m.root = dir;
  m.dataset_id = "synthetic-" + std::to_string(spec.num_classes) + "c-" + std::to_string(spec.seed);
  for (int c = 0; c < spec.num_classes; ++c) m.class_names.push_back("motif" + std::to_string(c));
  json boxes = json::object();
  std::vector<ImageTensor> images;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%05zu.png", i);
    write_png(dir / name, samples[i].image);
    m.records.push_back({name, samples[i].label});
    json list = json::array();
    for (const auto& b : samples[i].motif_boxes) list.push_back({b.y0, b.x0, b.y1, b.x1});
    boxes[name] = list;
    images.push_back(samples[i].image);
  }
  write_manifest(m, dir / "manifest.csv");
  write_dataset_sidecar(m, dir);
  m.stats = compute_stats(images);
  write_stats(*m.stats, dir);
  std::ofstream(dir / "motifs.json") << boxes.dump() << '\n';
  return m;
}

std::vector<std::vector<Box>> read_motif_boxes(const fs::path& dir, const DatasetManifest& manifest) {
  std::ifstream in(dir / "motifs.json");
  if (!in) throw ManifestError("no motifs.json in " + dir.string());
  const auto j = json::parse(in);
  std::vector<std::vector<Box>> out;
  for (const auto& r : manifest.records) {
    std::vector<Box> boxes;
    if (j.contains(r.path)) {
      for (const auto& b : j.at(r.path)) boxes.push_back({b[0], b[1], b[2], b[3]});
    }
    out.push_back(std::move(boxes));
  }
  return out;
}

}  // namespace fgssl::data
