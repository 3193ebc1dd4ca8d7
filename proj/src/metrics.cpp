#include <algorithm>
#include <numeric>
#include <set>

#include "fgssl/errors.hpp"
#include "fgssl/evaluation.hpp"

namespace fgssl::eval {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  if (a == 0) throw ShapeError("metrics need at least one sample");
}

void check_labels(std::span<const int> v, int num_classes) {
  for (int x : v) {
    if (x < 0 || x >= num_classes) {
      throw ShapeError("label " + std::to_string(x) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  check_lengths(preds.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<std::vector<int>> confusion_matrix(std::span<const int> preds, std::span<const int> labels,
                                               int num_classes) {
  check_lengths(preds.size(), labels.size());
  check_labels(preds, num_classes);
  check_labels(labels, num_classes);
  std::vector<std::vector<int>> cm(num_classes, std::vector<int>(num_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) ++cm[labels[i]][preds[i]];
  return cm;
}

double f1_score(std::span<const int> preds, std::span<const int> labels, int num_classes, F1Average average) {
  const auto cm = confusion_matrix(preds, labels, num_classes);
  std::set<int> present(labels.begin(), labels.end());
  present.insert(preds.begin(), preds.end());
  double total = 0.0;
  double weight_total = 0.0;
  for (int c : present) {
    double tp = cm[c][c];
    double predicted = 0.0;
    double actual = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      predicted += cm[k][c];
      actual += cm[c][k];
    }
    const double p = predicted > 0 ? tp / predicted : 0.0;
    const double r = actual > 0 ? tp / actual : 0.0;
    const double f1 = p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
    const double w = average == F1Average::Macro ? 1.0 : actual;
    total += w * f1;
    weight_total += w;
  }
  return weight_total > 0 ? total / weight_total : 0.0;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Midranks: a tie group spanning sorted positions [i, j) gets rank (i+j+1)/2.
  double positive_rank_sum = 0.0;
  double n_pos = 0.0;
  double n_neg = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw MetricError("binary AUC needs labels in {0,1}");
      if (y == 1) {
        positive_rank_sum += midrank;
        n_pos += 1;
      } else {
        n_neg += 1;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw MetricError("AUC needs both classes present");
  const double u = positive_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

double roc_auc_multiclass(std::span<const double> probabilities, std::span<const int> labels, int num_classes) {
  if (probabilities.size() != labels.size() * static_cast<std::size_t>(num_classes)) {
    throw ShapeError("probabilities must be N x m");
  }
  check_labels(labels, num_classes);
  const std::size_t n = labels.size();
  auto column = [&](int c) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = probabilities[i * num_classes + c];
    return col;
  };
  if (num_classes == 2) return roc_auc(column(1), labels);

  double total = 0.0;
  int used = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<int> binary(n);
    int positives = 0;
    for (std::size_t i = 0; i < n; ++i) positives += binary[i] = labels[i] == c;
    if (positives == 0 || positives == static_cast<int>(n)) continue;
    total += roc_auc(column(c), binary);
    ++used;
  }
  if (used == 0) throw MetricError("no class has both positive and negative samples");
  return total / used;
}

nlohmann::json EvalReport::to_json() const {
  return nlohmann::json{{"accuracy", accuracy},       {"macro_f1", macro_f1},
                        {"weighted_f1", weighted_f1}, {"auc", auc},
                        {"auc_mode", auc_binary ? "binary" : "macro_ovr"},
                        {"precision", precision},     {"recall", recall},
                        {"confusion", confusion},     {"config_hash", config_hash},
                        {"dataset_id", dataset_id},   {"num_samples", num_samples}};
}

EvalReport make_report(std::span<const double> probabilities, std::span<const int> labels, int num_classes) {
  if (probabilities.size() != labels.size() * static_cast<std::size_t>(num_classes)) {
    throw ShapeError("probabilities must be N x m");
  }
  std::vector<int> preds(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = probabilities.subspan(i * num_classes, num_classes);
    // max_element returns the first maximum: ties go to the lowest class index
    preds[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  EvalReport r;
  r.num_samples = static_cast<int>(labels.size());
  r.accuracy = accuracy(preds, labels);
  r.macro_f1 = f1_score(preds, labels, num_classes, F1Average::Macro);
  r.weighted_f1 = f1_score(preds, labels, num_classes, F1Average::Weighted);
  r.confusion = confusion_matrix(preds, labels, num_classes);
  r.auc_binary = num_classes == 2;
  try {
    r.auc = roc_auc_multiclass(probabilities, labels, num_classes);
  } catch (const MetricError&) {
    r.auc = 0.5;  // undefined when a single class is present
  }
  for (int c = 0; c < num_classes; ++c) {
    double predicted = 0.0;
    double actual = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      predicted += r.confusion[k][c];
      actual += r.confusion[c][k];
    }
    r.precision.push_back(predicted > 0 ? r.confusion[c][c] / predicted : 0.0);
    r.recall.push_back(actual > 0 ? r.confusion[c][c] / actual : 0.0);
  }
  return r;
}

}  // namespace fgssl::eval
