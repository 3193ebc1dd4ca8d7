#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fgssl::eval {

// Fraction of exact matches. ShapeError on length mismatch or empty input.
double accuracy(std::span<const int> preds, std::span<const int> labels);

enum class F1Average { Macro, Weighted };

// Per-class F1 = 2PR/(P+R) (0 when P+R = 0), averaged over the classes that
// occur in labels or predictions. Macro averages unweighted; Weighted uses
// label support.
double f1_score(std::span<const int> preds, std::span<const int> labels, int num_classes,
                F1Average average = F1Average::Macro);
inline double macro_f1(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  return f1_score(preds, labels, num_classes, F1Average::Macro);
}

// Binary AUC as the normalized Mann-Whitney U statistic; tied scores count
// 1/2 (midrank convention). MetricError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
// Macro one-vs-rest AUC over classes with both positives and negatives.
// `probabilities` is row-major N x m. Two-class input uses binary mode on
// the class-1 column.
double roc_auc_multiclass(std::span<const double> probabilities, std::span<const int> labels,
                          int num_classes);

std::vector<std::vector<int>> confusion_matrix(std::span<const int> preds, std::span<const int> labels,
                                               int num_classes);

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  double auc = 0.0;
  bool auc_binary = false;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<std::vector<int>> confusion;
  std::string config_hash;
  std::string dataset_id;
  int num_samples = 0;

  nlohmann::json to_json() const;
};

EvalReport make_report(std::span<const double> probabilities, std::span<const int> labels, int num_classes);

}  // namespace fgssl::eval
