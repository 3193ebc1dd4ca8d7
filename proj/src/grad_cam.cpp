#include "fgssl/grad_cam.hpp"

#include <algorithm>

#include <opencv2/imgproc.hpp>

#include "fgssl/errors.hpp"

namespace fgssl::eval {

float Heatmap::max() const { return values.empty() ? 0.0f : *std::max_element(values.begin(), values.end()); }

std::vector<Heatmap> grad_cam_layers(model::PmgNetwork& net, const ImageTensor& image, int target_class,
                                     const std::vector<int>& stages, const std::array<float, 3>& mean,
                                     const std::array<float, 3>& stddev) {
  const int num_stages = net->backbone().num_stages();
  for (int s : stages) {
    if (s < 1 || s > num_stages) {
      throw StepError("stage " + std::to_string(s) + " outside [1, " + std::to_string(num_stages) + "]");
    }
  }
  const bool was_training = net->is_training();
  net->eval();
  torch::AutoGradMode enable(true);
  const auto x = model::images_to_tensor(std::span(&image, 1), mean, stddev);
  auto trace = net->trace(x);
  const auto summed = torch::stack(trace.logits).sum(0);
  if (target_class < 0 || target_class >= summed.size(1)) {
    net->train(was_training);
    throw ShapeError("target class " + std::to_string(target_class) + " outside the classifier's range");
  }
  net->zero_grad();
  summed[0][target_class].backward();

  std::vector<Heatmap> out;
  for (int s : stages) {
    const auto& act = trace.stage_maps[s - 1];
    auto grad = act.grad();
    if (!grad.defined()) grad = torch::zeros_like(act);
    torch::NoGradGuard guard;
    const auto weights = grad.mean({2, 3}, /*keepdim=*/true);
    auto cam = torch::relu((weights * act.detach()).sum(1, /*keepdim=*/true));
    cam = torch::nn::functional::interpolate(
        cam, torch::nn::functional::InterpolateFuncOptions()
                 .size(std::vector<int64_t>{image.height(), image.width()})
                 .mode(torch::kBilinear)
                 .align_corners(false));
    cam = cam.squeeze().to(torch::kFloat32).contiguous();
    const float hi = cam.max().item<float>();
    const float lo = cam.min().item<float>();
    if (hi > 0.0f) cam = hi > lo ? (cam - lo) / (hi - lo) : cam / hi;
    Heatmap h;
    h.height = image.height();
    h.width = image.width();
    h.values.assign(cam.data_ptr<float>(), cam.data_ptr<float>() + cam.numel());
    out.push_back(std::move(h));
  }
  net->zero_grad();
  net->train(was_training);
  return out;
}

Heatmap grad_cam(model::PmgNetwork& net, const ImageTensor& image, int target_class, int stage,
                 const std::array<float, 3>& mean, const std::array<float, 3>& stddev) {
  return grad_cam_layers(net, image, target_class, {stage}, mean, stddev).front();
}

ImageTensor overlay(const ImageTensor& image, const Heatmap& heatmap, float alpha) {
  if (heatmap.height != image.height() || heatmap.width != image.width()) {
    throw ShapeError("heatmap and image sizes differ");
  }
  cv::Mat gray(heatmap.height, heatmap.width, CV_8UC1);
  for (int y = 0; y < heatmap.height; ++y) {
    for (int x = 0; x < heatmap.width; ++x) {
      gray.at<uint8_t>(y, x) = cv::saturate_cast<uint8_t>(heatmap.at(y, x) * 255.0f);
    }
  }
  cv::Mat colored;
  cv::applyColorMap(gray, colored, cv::COLORMAP_JET);  // BGR
  ImageTensor out(image.height(), image.width(), 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto bgr = colored.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        const float base = image.at(y, x, image.channels() == 1 ? 0 : c);
        out.at(y, x, c) = (1.0f - alpha) * base + alpha * (bgr[2 - c] / 255.0f);
      }
    }
  }
  return out;
}

ImageTensor tile_row(const std::vector<ImageTensor>& panels, int gap) {
  if (panels.empty()) throw ShapeError("nothing to tile");
  const int h = panels.front().height();
  int w = gap;
  for (const auto& p : panels) {
    if (p.height() != h || p.channels() != 3) throw ShapeError("panels must be RGB with equal heights");
    w += p.width() + gap;
  }
  ImageTensor out(h + 2 * gap, w, 3, 1.0f);
  int x = gap;
  for (const auto& p : panels) {
    out.paste(p, gap, x);
    x += p.width() + gap;
  }
  return out;
}

ImageTensor stack_rows(const std::vector<ImageTensor>& rows, int gap) {
  if (rows.empty()) throw ShapeError("nothing to stack");
  int w = 0;
  int h = 0;
  for (const auto& r : rows) {
    w = std::max(w, r.width());
    h += r.height() + gap;
  }
  ImageTensor out(h, w, 3, 1.0f);
  int y = 0;
  for (const auto& r : rows) {
    out.paste(r, y, 0);
    y += r.height() + gap;
  }
  return out;
}

Localization motif_localization(const Heatmap& heatmap, const std::vector<data::Box>& boxes) {
  double inside = 0.0;
  double outside = 0.0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  for (int y = 0; y < heatmap.height; ++y) {
    for (int x = 0; x < heatmap.width; ++x) {
      const bool hit = std::any_of(boxes.begin(), boxes.end(), [&](const auto& b) { return b.contains(y, x); });
      (hit ? inside : outside) += heatmap.at(y, x);
      ++(hit ? n_in : n_out);
    }
  }
  if (n_in == 0 || n_out == 0) throw ShapeError("motif boxes must cover some but not all pixels");
  return {inside / static_cast<double>(n_in), outside / static_cast<double>(n_out)};
}

}  // namespace fgssl::eval
