#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cadbench {

// Linear interpolation between order statistics at zero-based rank q*(n-1).
// `values` need not be sorted. q in [0, 1].
double percentile(std::span<const double> values, double q);

// Mann-Whitney AUROC with midranks: P(anomalous > normal) + P(equal) / 2.
// labels: true = anomalous. Throws "undefined AUROC" if a class is missing.
double auroc(std::span<const double> scores, std::span<const bool> labels);

struct AccuracyRecall {
  double accuracy = 0.0;
  double recall = 0.0;  // TP / (TP + FN); 0 when there are no anomalous samples
};

// Predicted anomalous iff score > threshold.
AccuracyRecall accuracy_recall(std::span<const double> scores, std::span<const bool> labels, double threshold);

// Same, with a threshold per sample (e.g. the routed task's threshold).
AccuracyRecall accuracy_recall(std::span<const double> scores, std::span<const bool> labels,
                               std::span<const double> thresholds);

enum class MetricKind { auroc, accuracy, recall };
const char* to_string(MetricKind kind);
MetricKind metric_kind_from_string(const std::string& s);

// Lower-triangular a[t][j] (0-based): performance on task j after training
// through task t, defined for j <= t.
class EvalMatrix {
 public:
  explicit EvalMatrix(std::size_t tasks = 0, MetricKind kind = MetricKind::auroc);

  std::size_t tasks() const { return tasks_; }
  MetricKind kind() const { return kind_; }
  void set(std::size_t t, std::size_t j, double value);
  double at(std::size_t t, std::size_t j) const;
  bool has(std::size_t t, std::size_t j) const;
  bool complete() const;
  bool operator==(const EvalMatrix&) const = default;

 private:
  std::size_t index(std::size_t t, std::size_t j) const;

  std::size_t tasks_;
  MetricKind kind_;
  std::vector<double> values_;
  std::vector<bool> filled_;
};

struct MetricSummary {
  double final_mean = 0.0;      // mean of the last row
  double fm = 0.0;              // mean of per_task_f
  std::vector<double> per_task_f;  // f_j for j = 0..T-2
  bool single_task = false;     // T < 2: fm reported as 0
};

// f_j = max_{t in [j, T-2]} a[t][j] - a[T-1][j], kept signed. Requires a
// complete matrix. For T = 1 returns fm = 0 with single_task set.
MetricSummary forgetting(const EvalMatrix& matrix);

}  // namespace cadbench
