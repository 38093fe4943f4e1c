#include "cadbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadbench/error.hpp"

namespace cadbench {

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw Error("percentile of empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("quantile must be in [0,1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double auroc(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based midranks of the anomalous samples.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double midrank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (labels[order[k]]) {
        rank_sum += midrank;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error("undefined AUROC");
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

namespace {

template <typename ThresholdAt>
AccuracyRecall tally(std::span<const double> scores, std::span<const bool> labels, ThresholdAt threshold_at) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  std::size_t correct = 0, tp = 0, positives = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const bool predicted = scores[k] > threshold_at(k);
    if (predicted == labels[k]) ++correct;
    if (labels[k]) {
      ++positives;
      if (predicted) ++tp;
    }
  }
  AccuracyRecall out;
  if (!scores.empty()) out.accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
  if (positives) out.recall = static_cast<double>(tp) / static_cast<double>(positives);
  return out;
}

}  // namespace

AccuracyRecall accuracy_recall(std::span<const double> scores, std::span<const bool> labels, double threshold) {
  if (std::isnan(threshold)) throw Error("threshold is NaN");
  return tally(scores, labels, [&](std::size_t) { return threshold; });
}

AccuracyRecall accuracy_recall(std::span<const double> scores, std::span<const bool> labels,
                               std::span<const double> thresholds) {
  if (thresholds.size() != scores.size()) throw Error("thresholds and scores differ in length");
  return tally(scores, labels, [&](std::size_t k) { return thresholds[k]; });
}

const char* to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::auroc: return "auroc";
    case MetricKind::accuracy: return "accuracy";
    case MetricKind::recall: return "recall";
  }
  return "?";
}

MetricKind metric_kind_from_string(const std::string& s) {
  if (s == "auroc") return MetricKind::auroc;
  if (s == "accuracy") return MetricKind::accuracy;
  if (s == "recall") return MetricKind::recall;
  throw Error("unknown metric kind " + s);
}

EvalMatrix::EvalMatrix(std::size_t tasks, MetricKind kind)
    : tasks_(tasks), kind_(kind), values_(tasks * (tasks + 1) / 2, 0.0), filled_(values_.size(), false) {}

std::size_t EvalMatrix::index(std::size_t t, std::size_t j) const {
  if (t >= tasks_ || j > t) throw Error("eval matrix index out of lower triangle");
  return t * (t + 1) / 2 + j;
}

void EvalMatrix::set(std::size_t t, std::size_t j, double value) {
  if (!(value >= 0.0 && value <= 1.0)) throw Error("metric value outside [0,1]");
  const std::size_t k = index(t, j);
  values_[k] = value;
  filled_[k] = true;
}

double EvalMatrix::at(std::size_t t, std::size_t j) const {
  const std::size_t k = index(t, j);
  if (!filled_[k]) throw Error("incomplete matrix");
  return values_[k];
}

bool EvalMatrix::has(std::size_t t, std::size_t j) const { return filled_[index(t, j)]; }

bool EvalMatrix::complete() const {
  return std::all_of(filled_.begin(), filled_.end(), [](bool b) { return b; });
}

MetricSummary forgetting(const EvalMatrix& matrix) {
  if (matrix.tasks() == 0 || !matrix.complete()) throw Error("incomplete matrix");
  const std::size_t last = matrix.tasks() - 1;
  MetricSummary out;
  double final_sum = 0.0;
  for (std::size_t j = 0; j <= last; ++j) final_sum += matrix.at(last, j);
  out.final_mean = final_sum / static_cast<double>(matrix.tasks());
  if (matrix.tasks() < 2) {
    out.single_task = true;
    return out;
  }
  double f_sum = 0.0;
  for (std::size_t j = 0; j < last; ++j) {
    double best = matrix.at(j, j);
    for (std::size_t t = j + 1; t < last; ++t) best = std::max(best, matrix.at(t, j));
    const double f = best - matrix.at(last, j);
    out.per_task_f.push_back(f);
    f_sum += f;
  }
  out.fm = f_sum / static_cast<double>(last);
  return out;
}

}  // namespace cadbench
