#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pgt/tensor.hpp"

namespace pgt::metrics {

// mean IoU over the classes present in gt; pred holds H x W x K logits, gt
// holds H x W class ids. Pixels labeled ignore_label are excluded (pass a
// negative value to disable).
double miou(const Tensor& pred, const Tensor& gt, int num_classes, int ignore_label = -1);

// RMSE over masked pixels; an undefined mask means all pixels.
double rmse(const Tensor& pred, const Tensor& gt, const Tensor& mask = Tensor());

// mean angular error in degrees between per-pixel 3-vectors (both sides
// L2-normalized; a zero-norm prediction counts as 90 degrees)
double mean_angle(const Tensor& pred, const Tensor& gt, const Tensor& mask = Tensor());

// optimal-dataset-scale F-measure: sweeps thresholds 0.01..0.99, matches
// predicted and ground-truth edge pixels within a 1-pixel (Chebyshev)
// radius, and returns the best dataset-wide 2PR/(P+R)
double ods_f(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts);

struct MetricRow {
  std::string task;
  std::string metric;
  double value = 0.0;
  std::optional<double> baseline;
  bool lower_is_better = false;
};

// average per-task relative change vs the baseline, sign-corrected by each
// metric's direction, in percent
double delta_m(const std::vector<MetricRow>& rows);

struct MetricsReport {
  std::vector<MetricRow> rows;
  std::optional<double> delta_m_percent;

  void compute_delta_m();  // requires every row to carry a baseline
  std::string to_kv_text() const;
  std::string to_csv() const;
  static MetricsReport from_kv_text(const std::string& text);
};

}  // namespace pgt::metrics
