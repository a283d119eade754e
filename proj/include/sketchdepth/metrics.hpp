#pragma once

#include <cmath>

#include "sketchdepth/core.hpp"

namespace sketchdepth {

struct DeltaThresholds {
  double d1 = 1.05;
  double d2 = 1.10;
  double d3 = 1.25 * 1.25 * 1.25;

  void validate() const {
    if (!(1.0 < d1 && d1 < d2 && d2 < d3)) throw DomainError("delta thresholds must satisfy 1 < d1 < d2 < d3");
  }
};

/// Errors in millimeters, accuracies in percent.
struct EvalReport {
  double mae_mm = 0;
  double rmse_mm = 0;
  double acc1 = 0, acc2 = 0, acc3 = 0;
  std::size_t valid_count = 0;
};

/// Evaluates over every pixel with gt > 0. A prediction of 0 there is
/// scored as an error and fails every threshold. A pixel passes threshold d
/// when max(pred/gt, gt/pred) <= d.
inline EvalReport evaluate(const DepthMap& pred, const DepthMap& gt, const DeltaThresholds& th = {}) {
  th.validate();
  if (!pred.same_shape(gt.width(), gt.height())) throw ShapeError("evaluate: prediction and ground truth differ in size");
  double abs_sum = 0, sq_sum = 0;
  std::size_t n = 0, pass1 = 0, pass2 = 0, pass3 = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt[i];
    if (!(g > 0)) continue;
    const double p = pred[i];
    const double e = p - g;
    abs_sum += std::abs(e);
    sq_sum += e * e;
    ++n;
    if (p > 0) {
      const double ratio = std::max(p / g, g / p);
      pass1 += ratio <= th.d1;
      pass2 += ratio <= th.d2;
      pass3 += ratio <= th.d3;
    }
  }
  if (n == 0) throw UndefinedMetricError("evaluate: ground truth has no valid pixel");
  EvalReport r;
  r.valid_count = n;
  r.mae_mm = abs_sum / n * 1000.0;
  r.rmse_mm = std::sqrt(sq_sum / n) * 1000.0;
  r.acc1 = 100.0 * pass1 / n;
  r.acc2 = 100.0 * pass2 / n;
  r.acc3 = 100.0 * pass3 / n;
  return r;
}

}  // namespace sketchdepth
