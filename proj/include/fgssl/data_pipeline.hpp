#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fgssl/image.hpp"

namespace fgssl::data {

struct ManifestRecord {
  std::string path;  // relative to the manifest's directory
  int label = 0;
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct ChannelStats {
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> stddev{0.5f, 0.5f, 0.5f};
};

// CSV manifest (`path,label` header) plus optional sidecars in the same
// directory: dataset.json ({"id", "classes"}) and stats.json ({"mean", "std"}).
struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> class_names;
  std::string dataset_id;
  std::optional<ChannelStats> stats;
  std::filesystem::path root;  // directory the paths are relative to

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<int> labels() const;
  std::vector<int> class_counts() const;
};

inline constexpr const char* kManifestHeader = "path,label";

// Parses and validates a manifest. Malformed rows and out-of-range labels
// throw ParseError with the 1-based line number; missing image files are
// collected and reported together in one ManifestError.
DatasetManifest load_manifest(const std::filesystem::path& csv_path, bool check_files = true);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path);
void write_dataset_sidecar(const DatasetManifest& manifest, const std::filesystem::path& dir);
void write_stats(const ChannelStats& stats, const std::filesystem::path& dir);
std::optional<ChannelStats> read_stats(const std::filesystem::path& dir);

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  bool stratified = true;
};

// Disjoint, exhaustive split; per class round(fraction * count) samples go to
// train (clamped so both sides keep at least one). Throws StratifyError when
// a class has fewer than 2 samples.
std::pair<DatasetManifest, DatasetManifest> stratified_split(const DatasetManifest& manifest,
                                                             const SplitSpec& spec);

// Axis-aligned box in pixel coordinates, [y0, y1) x [x0, x1).
struct Box {
  int y0 = 0;
  int x0 = 0;
  int y1 = 0;
  int x1 = 0;
  bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
};

struct SyntheticSample {
  ImageTensor image;
  int label = 0;
  std::vector<Box> motif_boxes;
};

struct SyntheticSpec {
  int num_classes = 4;
  int per_class = 16;
  int image_size = 64;
  std::uint64_t seed = 7;
  int max_granularity = 8;
};

// Desk-scale stand-in for lesion datasets: each class is a small motif shape
// (horizontal bar, vertical bar, cross, ring) drawn in near-black ink a few
// times among blob distractors. Every image shares the same gray background
// up to pixel noise, and all motif shapes cover about the same area, so the
// label is carried by local structure only. It survives jigsaw shuffling and
// flips, and per-class pixel histograms match. Supports 2 to 4 classes. Throws ConfigError unless
// image_size is divisible by 32 and by max_granularity.
std::vector<SyntheticSample> synth_dataset(const SyntheticSpec& spec);

// Writes images as PNG plus manifest.csv, dataset.json and motifs.json.
DatasetManifest write_synthetic_dataset(const std::vector<SyntheticSample>& samples,
                                        const SyntheticSpec& spec,
                                        const std::filesystem::path& dir);
std::vector<std::vector<Box>> read_motif_boxes(const std::filesystem::path& dir,
                                               const DatasetManifest& manifest);

// Per-channel mean/std over all pixels of the given images.
ChannelStats compute_stats(const std::vector<ImageTensor>& images);

}  // namespace fgssl::data
