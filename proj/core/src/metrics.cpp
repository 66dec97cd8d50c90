#include "proxytr/metrics.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <thread>

#include "proxytr/errors.hpp"

namespace proxytr {
namespace {

double manhattan(Point3 a, Point3 b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z); }

double mean_nearest_l1(const PointCloud& from, const PointCloud& to) {
  double total = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, manhattan(p, q));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

double mean_of(const std::vector<double>& v, bool take_sqrt) {
  double total = 0.0;
  for (double x : v) total += take_sqrt ? std::sqrt(x) : x;
  return total / static_cast<double>(v.size());
}

double fraction_below(const std::vector<double>& d2, double threshold) {
  std::size_t hits = 0;
  for (double x : d2) hits += std::sqrt(x) < threshold ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(d2.size());
}

}  // namespace

double chamfer(const PointCloud& pred, const PointCloud& gt, ChamferPreset preset) {
  if (preset == ChamferPreset::cd_l1_literal) return 0.5 * (mean_nearest_l1(pred, gt) + mean_nearest_l1(gt, pred));
  const auto fwd = nearest_squared_distances(gt.points(), pred.points());
  const auto bwd = nearest_squared_distances(pred.points(), gt.points());
  if (preset == ChamferPreset::cd_l2) return mean_of(fwd, false) + mean_of(bwd, false);
  return 0.5 * (mean_of(fwd, true) + mean_of(bwd, true));
}

double fscore(const PointCloud& pred, const PointCloud& gt, double threshold) {
  if (!(threshold > 0.0)) throw DomainError("fscore: threshold must be positive");
  const double precision = fraction_below(nearest_squared_distances(gt.points(), pred.points()), threshold);
  const double recall = fraction_below(nearest_squared_distances(pred.points(), gt.points()), threshold);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double fidelity(const PointCloud& input, const PointCloud& output) {
  return mean_of(nearest_squared_distances(output.points(), input.points()), true);
}

double mmd(const PointCloud& output, const std::vector<PointCloud>& references) {
  if (references.empty()) throw DomainError("mmd: empty reference set");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ref : references) best = std::min(best, chamfer(output, ref, ChamferPreset::cd_l2));
  return best;
}

MetricReport evaluate(const PointCloud& pred, const PointCloud& gt, double threshold) {
  if (!(threshold > 0.0)) throw DomainError("evaluate: threshold must be positive");
  const auto fwd = nearest_squared_distances(gt.points(), pred.points());
  const auto bwd = nearest_squared_distances(pred.points(), gt.points());
  MetricReport r;
  r.cd_l2 = mean_of(fwd, false) + mean_of(bwd, false);
  r.cd_l1 = 0.5 * (mean_of(fwd, true) + mean_of(bwd, true));
  const double precision = fraction_below(fwd, threshold);
  const double recall = fraction_below(bwd, threshold);
  r.fscore = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  r.threshold = threshold;
  r.pred_count = pred.size();
  r.gt_count = gt.size();
  return r;
}

std::vector<SampleMetrics> evaluate_batch(const std::vector<std::string>& ids, const std::vector<PointCloud>& preds,
                                          const std::vector<PointCloud>& gts, double threshold, std::size_t threads) {
  if (ids.size() != preds.size() || preds.size() != gts.size()) {
    throw UsageError("evaluate_batch: ids, predictions and ground truths differ in length");
  }
  std::vector<SampleMetrics> out(ids.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, ids.size()));
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < ids.size(); i += workers) out[i] = {ids[i], evaluate(preds[i], gts[i], threshold)};
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  return out;
}

std::string batch_report_json(const std::vector<SampleMetrics>& samples, double threshold) {
  nlohmann::ordered_json doc;
  doc["samples"] = nlohmann::ordered_json::array();
  double l1 = 0.0, l2 = 0.0, f = 0.0;
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["cd_l1"] = s.report.cd_l1;
    rec["cd_l2"] = s.report.cd_l2;
    rec["fscore"] = s.report.fscore;
    doc["samples"].push_back(std::move(rec));
    l1 += s.report.cd_l1;
    l2 += s.report.cd_l2;
    f += s.report.fscore;
  }
  const double n = samples.empty() ? 1.0 : static_cast<double>(samples.size());
  doc["mean"] = {{"cd_l1", l1 / n}, {"cd_l2", l2 / n}, {"fscore", f / n}};
  doc["threshold"] = threshold;
  return doc.dump(2);
}

}  // namespace proxytr
