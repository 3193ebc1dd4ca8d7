#pragma once

#include <optional>
#include <vector>

#include <torch/torch.h>

namespace fgssl::ssl {

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr double kDefaultLambda = 5e-3;

enum class Branch { Augmented, Jigsaw };

// B x D batch of projector outputs from one branch.
struct EmbeddingBatch {
  torch::Tensor values;
  Branch branch = Branch::Augmented;

  // Throws ShapeError (not 2-D / non-finite) or BatchTooSmall (B < 2).
  void validate() const;
  int64_t batch() const { return values.size(0); }
  int64_t dim() const { return values.size(1); }
};

struct NormalizeDiagnostics {
  // Dimensions whose batch standard deviation fell below the epsilon guard.
  std::vector<int64_t> degenerate_dims;
};

// Per-dimension centering and scaling to unit population std (1/B), with
// std + epsilon in the divisor; a constant dimension maps to zeros.
torch::Tensor batch_normalize(const torch::Tensor& z, NormalizeDiagnostics* diag = nullptr,
                              double eps = kNormEpsilon);

struct CrossCorrelationMatrix {
  torch::Tensor values;  // D x D
  double eps = kNormEpsilon;
  NormalizeDiagnostics diag_a;
  NormalizeDiagnostics diag_b;
};

// C = normalize(zA)^T normalize(zB) / B. Shape checks throw ShapeError,
// B < 2 throws BatchTooSmall.
CrossCorrelationMatrix cross_correlation(const EmbeddingBatch& za, const EmbeddingBatch& zb);
CrossCorrelationMatrix cross_correlation(const torch::Tensor& za, const torch::Tensor& zb);

// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2.
torch::Tensor barlow_loss(const torch::Tensor& c, double lambda = kDefaultLambda);

// Sum over progressive steps of the mean cross-entropy between softmax(logits)
// and the pool-index label. Labels outside [0, logits.size(1)) throw LabelError.
torch::Tensor jigsaw_order_loss(const std::vector<torch::Tensor>& logits_per_step,
                                const std::vector<torch::Tensor>& labels_per_step);

struct PretrainTerms {
  bool use_barlow = true;
  bool use_order = true;
  double lambda = kDefaultLambda;
  double beta = 1.0;
};

struct PretrainLoss {
  torch::Tensor total;
  std::optional<torch::Tensor> barlow;  // absent when disabled
  std::optional<torch::Tensor> order;   // absent when disabled
  NormalizeDiagnostics diag_a;
  NormalizeDiagnostics diag_b;
};

// barlow_loss(cross_correlation(zA, zB), lambda) + beta * jigsaw_order_loss.
PretrainLoss pretrain_loss(const torch::Tensor& za, const torch::Tensor& zb,
                           const std::vector<torch::Tensor>& logits_jigsaw,
                           const std::vector<torch::Tensor>& labels_jigsaw,
                           const PretrainTerms& terms);

}  // namespace fgssl::ssl
