#pragma once

#include <array>
#include <vector>

#include "fgssl/data_pipeline.hpp"
#include "fgssl/image.hpp"
#include "fgssl/pmg_network.hpp"

namespace fgssl::eval {

// Single-channel map over the input grid, values in [0, 1].
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float max() const;
};

// Grad-CAM of the summed step logit for `target_class` at backbone stage
// `stage` (1-based): channel weights are spatially averaged gradients, the
// weighted map is rectified, bilinearly upsampled to the input size and
// min-max normalized. A map with no positive response stays all zero.
// StepError for a stage outside the backbone; ShapeError for a bad class.
Heatmap grad_cam(model::PmgNetwork& net, const ImageTensor& image, int target_class, int stage,
                 const std::array<float, 3>& mean, const std::array<float, 3>& stddev);

// Same as grad_cam for several stages from one forward/backward pass.
std::vector<Heatmap> grad_cam_layers(model::PmgNetwork& net, const ImageTensor& image, int target_class,
                                     const std::vector<int>& stages, const std::array<float, 3>& mean,
                                     const std::array<float, 3>& stddev);

// Jet-colored heatmap blended over the image.
ImageTensor overlay(const ImageTensor& image, const Heatmap& heatmap, float alpha = 0.5f);

// Tiles equally sized panels into one row with a `gap`-pixel white border.
ImageTensor tile_row(const std::vector<ImageTensor>& panels, int gap = 2);

// Stacks rows of possibly different widths, padding with white.
ImageTensor stack_rows(const std::vector<ImageTensor>& rows, int gap = 2);

struct Localization {
  double inside_mean = 0.0;
  double outside_mean = 0.0;
  bool inside_wins() const { return inside_mean > outside_mean; }
};

// Mean heatmap value over pixels covered by any box versus all other
// pixels. ShapeError when either region is empty.
Localization motif_localization(const Heatmap& heatmap, const std::vector<data::Box>& boxes);

}  // namespace fgssl::eval
