#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "proxytr/geometry.hpp"

namespace proxytr {

/// Chamfer distance conventions.
///  cd_l2:         mean min squared distance P→G plus G→P.
///  cd_l1:         (mean min Euclidean distance P→G + G→P) / 2.
///  cd_l1_literal: as cd_l1, but with the per-point L1 (Manhattan) norm.
enum class ChamferPreset { cd_l1, cd_l2, cd_l1_literal };

double chamfer(const PointCloud& pred, const PointCloud& gt, ChamferPreset preset);

/// Harmonic mean of precision and recall at threshold d (strict `<`).
/// Returns 0 when both are 0.
double fscore(const PointCloud& pred, const PointCloud& gt, double threshold = 0.01);

/// Mean distance from each input point to its nearest output point.
double fidelity(const PointCloud& input, const PointCloud& output);

/// Minimum cd_l2 between `output` and any reference.
double mmd(const PointCloud& output, const std::vector<PointCloud>& references);

struct MetricReport {
  double cd_l1 = 0.0;
  double cd_l2 = 0.0;
  double fscore = 0.0;
  double threshold = 0.01;
  std::size_t pred_count = 0;
  std::size_t gt_count = 0;
};

MetricReport evaluate(const PointCloud& pred, const PointCloud& gt, double threshold = 0.01);

struct SampleMetrics {
  std::string id;
  MetricReport report;
};

/// Evaluates (pred, gt) pairs on up to `threads` workers; results keep input order.
std::vector<SampleMetrics> evaluate_batch(const std::vector<std::string>& ids, const std::vector<PointCloud>& preds,
                                          const std::vector<PointCloud>& gts, double threshold, std::size_t threads);

/// JSON text {"samples":[{id,cd_l1,cd_l2,fscore}...],"mean":{cd_l1,cd_l2,fscore},"threshold":d}.
std::string batch_report_json(const std::vector<SampleMetrics>& samples, double threshold);

}  // namespace proxytr
