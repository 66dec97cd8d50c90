// One line per acceptance criterion; exit status is non-zero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "oracles.hpp"
#include "scratch.hpp"
#include "proxytr/datagen.hpp"
#include "proxytr/geometry.hpp"
#include "proxytr/metrics.hpp"
#include "proxytr/model.hpp"
#include "proxytr/training.hpp"

using namespace proxytr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<Point3> pts(const PointCloud& c) { return {c.begin(), c.end()}; }

PointCloud random_primitive(std::uint64_t seed, std::size_t index, std::size_t count) {
  Rng rng = Rng::derive(seed, index);
  const auto kind = static_cast<PrimitiveKind>(index % 3);
  return make_primitive(kind, random_params(kind, rng), count, rng);
}

template <typename T>
double max_abs_diff(const NDArray<T>& a, const NDArray<T>& b, std::size_t rows) {
  double worst = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) worst = std::max(worst, std::abs(double(a.at(r, c) - b.at(r, c))));
  return worst;
}

// 1
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const ModelConfig mc = ModelConfig::gradcheck();
  CompletionModel<double> model(mc, 21);
  TrainConfig tc = TrainConfig::desk();
  const PointCloud gt = random_primitive(22, 1, 32);
  Rng crop_rng(23);
  const PointCloud partial = crop_partial(gt, {0.3, 0.4, 0.866}, 8, mc.input_points, crop_rng).partial;

  auto loss = [&] {
    Rng noise(24);
    DenoiseRequest req{&gt, NoiseSpec{mc.denoise_queries, mc.noise_scale}, &noise};
    return completion_loss(model.forward(partial, &req), gt, tc, mc.patch_size()).total;
  };
  std::vector<Tensor<double>> params;
  for (const auto& p : model.params().params()) params.push_back(p.tensor);
  const double err = oracle::max_gradient_error(loss, params);
  const double secs = seconds_since(t0);
  return {err < 1e-4 && secs < 60.0,
          fmt("max relative error %.3g over %zu scalars, %.1f s", err, model.params().scalar_count(), secs)};
}

// 2
Outcome denoise_isolation() {
  const auto t0 = Clock::now();
  const ModelConfig mc = ModelConfig::desk();
  CompletionModel<double> model(mc, 31);
  double normal_diff = 0.0, dense_diff = 0.0, inference_diff = 0.0;
  for (std::size_t trial = 0; trial < 3; ++trial) {
    const PointCloud gt = random_primitive(32, trial, 1024);
    Rng rng = Rng::derive(33, trial);
    const PointCloud partial = crop_partial(gt, random_direction(rng), 512, mc.input_points, rng).partial;
    NoGradGuard guard;
    const auto plain = model.forward(partial);
    Rng noise = Rng::derive(34, trial);
    DenoiseRequest req{&gt, NoiseSpec{8, mc.noise_scale}, &noise};
    const auto with = model.forward(partial, &req);
    if (with.decoded.features.rows() != mc.queries + 8) return {false, "noised rows were not appended"};
    normal_diff = std::max(normal_diff,
                           max_abs_diff(with.decoded.features.value(), plain.decoded.features.value(), mc.queries));
    dense_diff = std::max(dense_diff, max_abs_diff(with.dense.value(), plain.dense.value(), plain.dense.rows()));
    const PointCloud inferred = model.complete(partial);
    const PointCloud trained_path = to_cloud(with.dense.value());
    for (std::size_t i = 0; i < inferred.size(); ++i)
      inference_diff = std::max(inference_diff, distance(inferred[i], trained_path[i]));
  }
  const double secs = seconds_since(t0);
  return {normal_diff <= 1e-6 && dense_diff <= 1e-6 && inference_diff == 0.0 && secs < 10.0,
          fmt("normal rows %.3g, dense %.3g, inference vs denoise forward %.3g, %.1f s", normal_diff, dense_diff,
              inference_diff, secs)};
}

// 3
Outcome metric_oracles() {
  Rng rng(41);
  double worst = 0.0;
  bool identities = true;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = oracle::random_points(rng, 1 + rng.below(64));
    const auto b = oracle::random_points(rng, 1 + rng.below(64));
    const PointCloud p(a), g(b);
    const double d = rng.uniform(0.05, 0.6);
    std::vector<std::vector<Point3>> refs;
    std::vector<PointCloud> ref_clouds;
    double best = 1e300;
    for (std::size_t r = 0, n = 1 + rng.below(3); r < n; ++r) {
      refs.push_back(oracle::random_points(rng, 1 + rng.below(64)));
      ref_clouds.emplace_back(refs.back());
      best = std::min(best, oracle::cd_l2(a, refs.back()));
    }
    worst = std::max({worst, std::abs(chamfer(p, g, ChamferPreset::cd_l2) - oracle::cd_l2(a, b)),
                      std::abs(chamfer(p, g, ChamferPreset::cd_l1) - oracle::cd_l1(a, b)),
                      std::abs(fscore(p, g, d) - oracle::fscore(a, b, d)),
                      std::abs(fidelity(p, g) - oracle::fidelity(a, b)), std::abs(mmd(p, ref_clouds) - best)});
    identities = identities && fscore(p, p) == 1.0 && chamfer(p, p, ChamferPreset::cd_l2) == 0.0 &&
                 chamfer(p, p, ChamferPreset::cd_l1) == 0.0;
  }
  return {worst <= 1e-12 && identities,
          fmt("max deviation %.3g on 200 instances, identities %s", worst, identities ? "exact" : "broken")};
}

// 4
Outcome geometry_oracles() {
  Rng rng(51);
  std::size_t fps_clouds = 0, fps_bad = 0;
  for (std::size_t n = 1; n <= 128; ++n) {
    for (int rep = 0; rep < 3; ++rep) {
      auto cloud = oracle::random_points(rng, n);
      if (rep == 2 && n > 2) cloud[n - 1] = cloud[0];
      const std::size_t count = 1 + rng.below(n);
      const std::size_t start = rep == 0 ? canonical_start(cloud) : rng.below(n);
      fps_bad += oracle::satisfies_fps(cloud, fps(cloud, count, start), start) ? 0 : 1;
      ++fps_clouds;
    }
  }
  std::size_t knn_bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(trial < 100 ? 64 : 2048);
    const auto ref = oracle::random_points(rng, n);
    const auto queries = oracle::random_points(rng, 1 + rng.below(64));
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(n, 16));
    const auto got = knn(ref, queries, k);
    bool same = got.k == k && got.queries == queries.size();
    for (std::size_t q = 0; same && q < queries.size(); ++q) {
      const auto row = got.row(q);
      same = std::vector<std::size_t>(row.begin(), row.end()) == oracle::knn_row(ref, queries[q], k);
    }
    knn_bad += same ? 0 : 1;
  }
  return {fps_bad == 0 && knn_bad == 0, fmt("fps %zu/%zu clouds greedy, knn %zu/200 exact", fps_clouds - fps_bad,
                                            fps_clouds, std::size_t(200 - knn_bad))};
}

// 5
Outcome encoder_equivariance() {
  const ModelConfig mc = ModelConfig::desk();
  ParamRegistry<float> reg(61);
  BlockConfig bc{mc.width, mc.heads, mc.ffn_width(), mc.k_geo, false};
  Encoder<float> enc(reg, "encoder", bc, mc.encoder_depth, mc.geometry_blocks);
  Rng rng(62);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = mc.proxies;
    ProxySequenceState<float> s{oracle::random_points(rng, n), {}};
    NDArray<float> f({n, mc.width});
    for (std::size_t i = 0; i < f.numel(); ++i) f[i] = float(rng.uniform(-1.0, 1.0));
    s.features = Tensor<float>(f);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    ProxySequenceState<float> p{{}, gather_rows(s.features, perm)};
    for (auto i : perm) p.coords.push_back(s.coords[i]);
    NoGradGuard guard;
    const auto a = enc(s).features.value();
    const auto b = enc(p).features.value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < mc.width; ++c)
        worst = std::max(worst, std::abs(double(b.at(r, c)) - double(a.at(perm[r], c))));
  }
  return {worst <= 1e-5, fmt("max deviation %.3g over 50 permuted sets", worst)};
}

// 6
constexpr std::size_t kTrainObjects = 200;
constexpr std::size_t kHeldOut = 40;
constexpr std::size_t kSeeds = 5;
constexpr std::size_t kSteps = 400;
constexpr std::size_t kTail = 50;

struct RunResult {
  double final_loss = 0.0;  // mean of j0 + j1 over the last kTail steps
  double model_cd = 0.0;
};

Outcome desk_training() {
  const auto t0 = Clock::now();
  const ModelConfig mc = ModelConfig::desk();
  TrainingSet data;
  for (std::size_t i = 0; i < kTrainObjects; ++i) data.completes.push_back(random_primitive(1, i, mc.output_points));
  std::vector<PointCloud> partials, completes;
  double baseline = 0.0;
  for (std::size_t i = 0; i < kHeldOut; ++i) {
    completes.push_back(random_primitive(99, i, mc.output_points));
    Rng rng = Rng::derive(98, i);
    partials.push_back(crop_partial(completes.back(), random_direction(rng),
                                    random_removal_count(mc.output_points, rng), mc.input_points, rng)
                           .partial);
    std::vector<Point3> copy = pts(partials.back());
    copy.resize(mc.output_points, partials.back().centroid());
    baseline += chamfer(PointCloud(copy), completes.back(), ChamferPreset::cd_l2) / kHeldOut;
  }

  auto train = [&](std::uint64_t seed, bool denoise) {
    TrainConfig tc = TrainConfig::desk();
    tc.denoise = denoise;
    Trainer<float> trainer(mc, tc, seed);
    RunResult r;
    const auto history = trainer.run(data, kSteps);
    for (std::size_t s = kSteps - kTail; s < kSteps; ++s) r.final_loss += (history[s].j0 + history[s].j1) / kTail;
    for (std::size_t i = 0; i < kHeldOut; ++i)
      r.model_cd += chamfer(trainer.model().complete(partials[i]), completes[i], ChamferPreset::cd_l2) / kHeldOut;
    return r;
  };

  std::size_t wins = 0;
  double worst_ratio = 0.0;
  std::string per_seed;
  for (std::size_t seed = 1; seed <= kSeeds; ++seed) {
    const RunResult with = train(seed, true);
    const RunResult without = train(seed, false);
    wins += with.final_loss < without.final_loss ? 1 : 0;
    worst_ratio = std::max(worst_ratio, with.model_cd / baseline);
    per_seed += fmt(" %.4f/%.4f", with.final_loss, without.final_loss);
  }
  const double secs = seconds_since(t0);
  return {worst_ratio <= 0.5 && wins >= 3 && secs <= 900.0,
          fmt("worst held-out cd_l2 ratio %.3f, denoise lower final loss in %zu/%zu seeds (dn/no-dn:%s), %.0f s",
              worst_ratio, wins, kSeeds, per_seed.c_str(), secs)};
}

// 7
Outcome cardinalities() {
  std::string detail;
  bool ok = true;
  auto check_count = [&](const char* name, ModelConfig mc, std::size_t expected) {
    CompletionModel<float> model(mc, 71);
    const PointCloud partial = random_primitive(72, 0, mc.input_points);
    NoGradGuard guard;
    const auto out = model.forward(partial);
    const std::size_t dense = out.dense.rows();
    ok = ok && dense == expected && dense == mc.output_points;
    detail += fmt("%s %zu = %zu x %zu%s; ", name, dense, out.coarse.rows(), mc.patch_size(),
                  mc.mode == CompletionMode::pointr ? " + input" : "");
    return std::tuple{std::move(out), partial};
  };
  {
    auto [out, partial] = check_count("pcn", ModelConfig::pcn(), 16384);
    ok = ok && out.coarse.rows() == 512 && ModelConfig::pcn().patch_size() == 32;
  }
  check_count("shapenet55", ModelConfig::shapenet55(), 8192);
  for (const auto& base : {ModelConfig::shapenet55(), ModelConfig::desk()}) {
    ModelConfig mc = base;
    mc.mode = CompletionMode::pointr;
    auto [out, partial] = check_count("pointr", mc, mc.output_points);
    CompletionModel<float> model(mc, 71);
    const PointCloud dense = model.complete(partial);
    std::set<std::tuple<double, double, double>> have;
    for (const auto& p : dense) have.insert({p.x, p.y, p.z});
    std::size_t missing = 0;
    for (const auto& p : partial) missing += have.count({p.x, p.y, p.z}) ? 0 : 1;
    ok = ok && missing == 0;
    detail += fmt("input points missing %zu; ", missing);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// 8
Outcome determinism() {
  scratch::Dir dir("accept_det");
  SynthConfig sc;
  sc.count = 4;
  sc.seed = 7;
  sc.complete_points = 1024;
  sc.partial_points = 256;
  write_dataset(sc, dir / "a", 1);
  write_dataset(sc, dir / "b", 3);
  const bool synth_ok = scratch::same_tree(dir / "a", dir / "b");

  TrainingSet data;
  for (std::size_t i = 0; i < 6; ++i) data.completes.push_back(random_primitive(81, i, 1024));
  TrainConfig tc = TrainConfig::desk();
  tc.batch_size = 2;
  std::vector<std::vector<LossBreakdown>> histories;
  std::vector<std::string> weights;
  for (int run = 0; run < 2; ++run) {
    Trainer<float> trainer(ModelConfig::desk(), tc, 5);
    const auto h = trainer.run(data, 5, nullptr, run == 0 ? dir / "ckpt.bin" : std::filesystem::path{});
    histories.push_back(h);
    weights.push_back(encode_checkpoint(trainer.checkpoint_entries()));
  }
  bool train_ok = weights[0] == weights[1];
  for (std::size_t s = 0; s < histories[0].size(); ++s)
    train_ok = train_ok && histories[0][s].total == histories[1][s].total;

  Trainer<float> reference(ModelConfig::desk(), tc, 5);
  reference.run(data, 5);
  const CompletionModel<float> restored = load_model(dir / "ckpt.bin");
  bool ckpt_ok = true;
  std::vector<std::string> ids;
  std::vector<PointCloud> preds, gts;
  for (std::size_t i = 0; i < 4; ++i) {
    Rng rng = Rng::derive(82, i);
    const PointCloud gt = random_primitive(83, i, 1024);
    const PointCloud partial = crop_partial(gt, random_direction(rng), 512, 256, rng).partial;
    const PointCloud a = reference.model().complete(partial);
    ckpt_ok = ckpt_ok && a == restored.complete(partial);
    ids.push_back(std::to_string(i));
    preds.push_back(a);
    gts.push_back(gt);
  }
  const bool eval_ok = batch_report_json(evaluate_batch(ids, preds, gts, 0.01, 1), 0.01) ==
                       batch_report_json(evaluate_batch(ids, preds, gts, 0.01, 4), 0.01);
  auto word = [](bool b) { return b ? "identical" : "DIFFERENT"; };
  return {synth_ok && train_ok && ckpt_ok && eval_ok,
          fmt("synth trees %s, training %s, eval %s, checkpoint inference %s", word(synth_ok), word(train_ok),
              word(eval_ok), word(ckpt_ok))};
}

// 9
Outcome backprojection() {
  double worst = 0.0;
  std::size_t views = 0;
  for (std::size_t obj = 0; obj < 6; ++obj) {
    const PointCloud complete = random_primitive(91, obj, 8192);
    for (const Point3 dir : cube_viewpoints()) {
      const CameraModel cam = camera_for(dir, 3.0, 200, 200.0);
      const DepthImage image = render_depth(complete, cam);
      const PointCloud visible = complete.subset(image.visible_indices());
      const PointCloud lifted(backproject(image, cam));
      Rng rng = Rng::derive(92, obj, views);
      const DatasetSample s = noised_backproject(complete, cam, 0.0, 2048, rng);
      worst = std::max({worst, chamfer(lifted, visible, ChamferPreset::cd_l2),
                        chamfer(s.partial, visible, ChamferPreset::cd_l2)});
      ++views;
    }
  }
  return {worst < 1e-3, fmt("worst cd_l2 %.3g over %zu renders at 200x200", worst, views)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"denoise isolation", denoise_isolation},
      {"metric oracles", metric_oracles},
      {"geometry oracles", geometry_oracles},
      {"encoder permutation equivariance", encoder_equivariance},
      {"desk training", desk_training},
      {"cardinality contracts", cardinalities},
      {"determinism", determinism},
      {"back-projection round trip", backprojection},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
