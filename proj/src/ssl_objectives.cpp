#include "fgssl/ssl_objectives.hpp"

#include <string>

#include "fgssl/errors.hpp"

namespace fgssl::ssl {

namespace {

std::string shape_of(const torch::Tensor& t) {
  std::string s = "(";
  for (int64_t i = 0; i < t.dim(); ++i) s += (i ? "," : "") + std::to_string(t.size(i));
  return s + ")";
}

void check_embedding(const torch::Tensor& z) {
  if (!z.defined() || z.dim() != 2) throw ShapeError("embedding batch must be B x D");
  if (z.size(0) < 2) {
    throw BatchTooSmall("batch statistics need B >= 2, got B=" + std::to_string(z.size(0)));
  }
  if (z.size(1) < 1) throw ShapeError("embedding dimension must be >= 1");
}

}  // namespace

void EmbeddingBatch::validate() const {
  check_embedding(values);
  if (!torch::isfinite(values).all().item<bool>()) throw ShapeError("embedding has non-finite entries");
}

torch::Tensor batch_normalize(const torch::Tensor& z, NormalizeDiagnostics* diag, double eps) {
  check_embedding(z);
  const auto centered = z - z.mean(0, /*keepdim=*/true);
  const auto std = centered.pow(2).mean(0, /*keepdim=*/true).sqrt();
  if (diag) {
    diag->degenerate_dims.clear();
    const auto flags = (std.detach().squeeze(0) <= eps).to(torch::kCPU);
    const auto acc = flags.accessor<bool, 1>();
    for (int64_t d = 0; d < flags.size(0); ++d) {
      if (acc[d]) diag->degenerate_dims.push_back(d);
    }
  }
  return centered / (std + eps);
}

CrossCorrelationMatrix cross_correlation(const torch::Tensor& za, const torch::Tensor& zb) {
  check_embedding(za);
  check_embedding(zb);
  if (za.sizes() != zb.sizes()) {
    throw ShapeError("branch shapes differ: " + shape_of(za) + " vs " + shape_of(zb));
  }
  CrossCorrelationMatrix out;
  const auto na = batch_normalize(za, &out.diag_a, out.eps);
  const auto nb = batch_normalize(zb, &out.diag_b, out.eps);
  out.values = na.transpose(0, 1).matmul(nb) / static_cast<double>(za.size(0));
  return out;
}

CrossCorrelationMatrix cross_correlation(const EmbeddingBatch& za, const EmbeddingBatch& zb) {
  return cross_correlation(za.values, zb.values);
}

torch::Tensor barlow_loss(const torch::Tensor& c, double lambda) {
  if (!c.defined() || c.dim() != 2 || c.size(0) != c.size(1)) {
    throw ShapeError("cross-correlation must be square, got " + shape_of(c));
  }
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  const auto diag = c.diagonal();
  const auto on_diag = (1.0 - diag).pow(2).sum();
  const auto off_mask = 1.0 - torch::eye(c.size(0), c.options());
  const auto off_diag = (c.pow(2) * off_mask).sum();
  return on_diag + lambda * off_diag;
}

torch::Tensor jigsaw_order_loss(const std::vector<torch::Tensor>& logits_per_step,
                                const std::vector<torch::Tensor>& labels_per_step) {
  if (logits_per_step.size() != labels_per_step.size() || logits_per_step.empty()) {
    throw ShapeError("need one (logits, labels) pair per progressive step");
  }
  torch::Tensor total;
  for (std::size_t s = 0; s < logits_per_step.size(); ++s) {
    const auto& logits = logits_per_step[s];
    const auto& labels = labels_per_step[s];
    if (logits.dim() != 2 || labels.dim() != 1 || labels.size(0) != logits.size(0)) {
      throw ShapeError("step " + std::to_string(s + 1) + ": logits " + shape_of(logits) +
                       " do not match labels " + shape_of(labels));
    }
    if (labels.numel() > 0) {
      const auto lo = labels.min().item<int64_t>();
      const auto hi = labels.max().item<int64_t>();
      if (lo < 0 || hi >= logits.size(1)) {
        throw LabelError("step " + std::to_string(s + 1) + ": label outside [0, " +
                         std::to_string(logits.size(1)) + ")");
      }
    }
    auto term = torch::nn::functional::cross_entropy(logits, labels.to(torch::kLong));
    total = total.defined() ? total + term : term;
  }
  return total;
}

PretrainLoss pretrain_loss(const torch::Tensor& za, const torch::Tensor& zb,
                           const std::vector<torch::Tensor>& logits_jigsaw,
                           const std::vector<torch::Tensor>& labels_jigsaw,
                           const PretrainTerms& terms) {
  if (!terms.use_barlow && !terms.use_order) {
    throw ConfigError("pretraining needs at least one of the Barlow and order terms");
  }
  PretrainLoss out;
  if (terms.use_barlow) {
    auto c = cross_correlation(za, zb);
    out.barlow = barlow_loss(c.values, terms.lambda);
    out.diag_a = std::move(c.diag_a);
    out.diag_b = std::move(c.diag_b);
    out.total = *out.barlow;
  }
  if (terms.use_order) {
    out.order = jigsaw_order_loss(logits_jigsaw, labels_jigsaw);
    auto weighted = terms.beta * *out.order;
    out.total = out.total.defined() ? out.total + weighted : weighted;
  }
  return out;
}

}  // namespace fgssl::ssl
