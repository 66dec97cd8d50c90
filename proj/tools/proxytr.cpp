#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "proxytr/config.hpp"
#include "proxytr/datagen.hpp"
#include "proxytr/errors.hpp"
#include "proxytr/geometry.hpp"
#include "proxytr/metrics.hpp"
#include "proxytr/training.hpp"

namespace fs = std::filesystem;
using namespace proxytr;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool dump_config = false;
};

struct SynthArgs {
  std::string kind;
  std::optional<std::size_t> count, views, complete_points, partial_points;
  std::string difficulty, split;
  std::optional<double> noise;
};

struct TrainArgs {
  std::string data, preset, mode, log, checkpoint, resume;
  std::optional<std::size_t> steps;
  bool no_denoise = false;
};

struct EvalArgs {
  std::string data, checkpoint, split = "test";
  bool oracle = false;
  double threshold = 0.01;
};

struct CompleteArgs {
  std::string input, checkpoint, output;
};

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PROXYTR_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap < 1) throw std::invalid_argument(env);
      n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    } catch (const std::exception&) {
      throw UsageError(std::string("PROXYTR_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return n;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Missing files are usage errors; parse errors keep their line number.
PointCloud load_cloud(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw UsageError("file '" + path.string() + "' does not exist");
  try {
    return read_xyz(path);
  } catch (const ParseError& e) {
    throw std::runtime_error("parse error in '" + path.string() + "', " + e.what());
  }
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

/// Defaults, then --preset, then --config, then --set, then explicit flags.
RunConfig effective_config(const Globals& g, const std::string& preset) {
  RunConfig rc;
  if (!preset.empty()) {
    rc.model = ModelConfig::preset(preset);
    rc.train = TrainConfig::preset(preset);
  }
  if (!g.config_path.empty()) rc = run_config_from_json(read_text(g.config_path), rc);
  for (const auto& o : g.overrides) apply_override(rc, o);
  if (g.seed) rc.seed = *g.seed;
  rc.synth.seed = rc.seed;
  return rc;
}

void emit(const json& report, const Globals& g, const fs::path& default_name) {
  const std::string text = report.dump(2);
  std::cout << text << '\n';
  if (g.out.empty() || default_name.empty()) return;
  const fs::path target = fs::path(g.out) / default_name;
  fs::create_directories(target.parent_path());
  std::ofstream(target) << text << '\n';
}

/// Resamples to the model's input size when a partial has a different count.
PointCloud fit_input(const PointCloud& partial, std::size_t size, std::uint64_t seed, std::size_t index) {
  if (partial.size() == size) return partial;
  Rng rng = Rng::derive(seed, index);
  return resample(partial, size, rng);
}

int cmd_synth(const Globals& g, const SynthArgs& a) {
  RunConfig rc = effective_config(g, "");
  SynthConfig& s = rc.synth;
  if (!a.kind.empty()) {
    if (a.kind == "crop") s.kind = SynthKind::crop;
    else if (a.kind == "backproject") s.kind = SynthKind::backproject;
    else throw UsageError("unknown --kind '" + a.kind + "' (expected crop or backproject)");
  }
  if (a.count) s.count = *a.count;
  if (a.views) s.views = *a.views;
  if (a.complete_points) s.complete_points = *a.complete_points;
  if (a.partial_points) s.partial_points = *a.partial_points;
  if (a.noise) s.noise_frac = *a.noise;
  if (!a.difficulty.empty()) s.difficulty = difficulty_from_string(a.difficulty);
  if (!a.split.empty()) s.split = a.split;
  if (g.dump_config) {
    std::cout << run_config_to_json(rc) << '\n';
    return 0;
  }
  const fs::path root = g.out.empty() ? fs::path("dataset") : fs::path(g.out);
  write_dataset(s, root, worker_count());
  const auto objects = read_manifest(root, s.split);
  std::size_t partials = 0;
  for (const auto& o : objects) partials += o.partials.size();
  json report;
  report["out"] = (root / s.split).string();
  report["objects"] = objects.size();
  report["partials"] = partials;
  std::cout << report.dump(2) << '\n';
  return 0;
}

TrainingSet load_training_set(const fs::path& root, const ModelConfig& mc, std::uint64_t seed) {
  TrainingSet data;
  const auto objects = read_manifest(root, "train");
  if (objects.empty()) throw UsageError("no training objects under '" + (root / "train").string() + "'");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    PointCloud complete = load_cloud(objects[i].complete_file);
    if (complete.size() > mc.output_points) {
      Rng rng = Rng::derive(seed, i);
      complete = resample(complete, mc.output_points, rng);
    }
    data.completes.push_back(std::move(complete));
    std::vector<PointCloud> views;
    for (const auto& p : objects[i].partials) views.push_back(load_cloud(p.file));
    data.partials.push_back(std::move(views));
  }
  return data;
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  std::optional<Trainer<float>> trainer;
  RunConfig rc;
  if (!a.resume.empty()) {
    require_file(a.resume, "--resume checkpoint");
    trainer.emplace(Trainer<float>::load(a.resume));
    rc = checkpoint_run_config(read_checkpoint(a.resume));
  } else {
    rc = effective_config(g, a.preset);
    if (!a.mode.empty()) rc.model.mode = mode_from_string(a.mode);
    if (a.no_denoise) rc.train.denoise = false;
  }
  if (a.steps) rc.train.steps = *a.steps;
  if (g.dump_config) {
    std::cout << run_config_to_json(rc) << '\n';
    return 0;
  }
  if (a.data.empty()) throw UsageError("train: --data is required");
  if (!fs::is_directory(a.data)) throw UsageError("train: dataset '" + a.data + "' does not exist");
  rc.model.validate();
  rc.train.validate();
  if (!trainer) trainer.emplace(rc.model, rc.train, rc.seed);

  const TrainingSet data = load_training_set(a.data, rc.model, rc.seed);
  const fs::path out = g.out.empty() ? fs::path("run") : fs::path(g.out);
  fs::create_directories(out);
  const fs::path log_path = a.log.empty() ? out / "train.jsonl" : fs::path(a.log);
  const fs::path ckpt = a.checkpoint.empty() ? out / "checkpoint.bin" : fs::path(a.checkpoint);
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw UsageError("cannot write log '" + log_path.string() + "'");

  const auto history = trainer->run(data, rc.train.steps, &log, ckpt);
  json report;
  report["steps"] = trainer->steps_done();
  report["checkpoint"] = ckpt.string();
  report["log"] = log_path.string();
  if (!history.empty()) {
    const auto& last = history.back();
    report["final"] = {{"j0", last.j0}, {"j1", last.j1}, {"j_denoise", last.j_denoise}, {"total", last.total}};
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

json metric_json(const MetricReport& r) {
  return {{"cd_l1", r.cd_l1}, {"cd_l2", r.cd_l2}, {"fscore", r.fscore}};
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const RunConfig rc = effective_config(g, "");
  if (g.dump_config) {
    std::cout << run_config_to_json(rc) << '\n';
    return 0;
  }
  if (a.data.empty() || !fs::is_directory(a.data)) throw UsageError("eval: dataset '" + a.data + "' does not exist");
  std::optional<CompletionModel<float>> model;
  if (!a.oracle) {
    require_file(a.checkpoint, "--checkpoint");
    model.emplace(load_model(a.checkpoint));
  }
  const auto objects = read_manifest(a.data, a.split);
  std::vector<std::string> ids;
  std::vector<Difficulty> levels;
  std::vector<PointCloud> preds, gts;
  std::size_t index = 0;
  for (const auto& obj : objects) {
    const PointCloud gt = load_cloud(obj.complete_file);
    for (const auto& p : obj.partials) {
      ids.push_back(obj.id + "/" + std::to_string(p.view));
      levels.push_back(p.difficulty);
      gts.push_back(gt);
      if (model) {
        const PointCloud partial = fit_input(load_cloud(p.file), model->config().input_points, rc.seed, index);
        preds.push_back(model->complete(partial));
      } else {
        preds.push_back(gt);
      }
      ++index;
    }
  }
  if (ids.empty()) throw UsageError("eval: no partials under '" + (fs::path(a.data) / a.split).string() + "'");
  const auto samples = evaluate_batch(ids, preds, gts, a.threshold, worker_count());

  // CD-S/M/H follow the usual benchmark scale: cd_l2 × 1000.
  std::map<Difficulty, std::vector<const MetricReport*>> by_level;
  for (std::size_t i = 0; i < samples.size(); ++i) by_level[levels[i]].push_back(&samples[i].report);
  auto mean = [](const std::vector<const MetricReport*>& rs) {
    MetricReport m;
    for (const auto* r : rs) {
      m.cd_l1 += r->cd_l1;
      m.cd_l2 += r->cd_l2;
      m.fscore += r->fscore;
    }
    const double n = static_cast<double>(rs.size());
    m.cd_l1 /= n;
    m.cd_l2 /= n;
    m.fscore /= n;
    return m;
  };
  json report;
  json per_level = json::object();
  double level_sum = 0.0;
  std::size_t level_count = 0;
  for (const auto& [level, name] : {std::pair{Difficulty::simple, "CD-S"}, std::pair{Difficulty::moderate, "CD-M"},
                                    std::pair{Difficulty::hard, "CD-H"}}) {
    const auto it = by_level.find(level);
    if (it == by_level.end()) {
      report[name] = nullptr;
      continue;
    }
    const MetricReport m = mean(it->second);
    report[name] = m.cd_l2 * 1000.0;
    level_sum += m.cd_l2 * 1000.0;
    ++level_count;
  }
  std::vector<const MetricReport*> all;
  for (const auto& s : samples) all.push_back(&s.report);
  const MetricReport overall = mean(all);
  report["avg"] = level_count ? json(level_sum / level_count) : json(overall.cd_l2 * 1000.0);
  report["fscore"] = overall.fscore;
  for (const auto& [level, rs] : by_level) {
    json entry = metric_json(mean(rs));
    entry["count"] = rs.size();
    per_level[to_string(level)] = entry;
  }
  report["per_difficulty"] = per_level;
  json agg = metric_json(overall);
  agg["count"] = all.size();
  report["aggregate"] = agg;
  report["threshold"] = a.threshold;
  report["samples"] = json::parse(batch_report_json(samples, a.threshold)).at("samples");
  emit(report, g, "eval.json");
  return 0;
}

int cmd_complete(const Globals& g, const CompleteArgs& a) {
  require_file(a.checkpoint, "--checkpoint");
  const CompletionModel<float> model = load_model(a.checkpoint);
  if (g.dump_config) {
    std::cout << model_config_to_json(model.config()) << '\n';
    return 0;
  }
  const PointCloud input = load_cloud(a.input);
  const std::uint64_t seed = g.seed.value_or(0);
  const PointCloud fitted = fit_input(input, model.config().input_points, seed, 0);
  const PointCloud out = model.complete(fitted);
  write_xyz(a.output, out.points());
  json report;
  report["input_points"] = input.size();
  report["model_input_points"] = fitted.size();
  report["output_points"] = out.size();
  report["mode"] = to_string(model.config().mode);
  report["out"] = a.output;
  std::cout << report.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"proxytr: point cloud completion with point proxies"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--set", g.overrides, "Override a config key, e.g. train.lr=0.001")->take_all();
  app.add_flag("--dump-config", g.dump_config, "Print the effective config and exit");
  app.fallthrough();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a procedural dataset");
  synth->add_option("--kind", sa.kind, "crop or backproject");
  synth->add_option("--count", sa.count, "Number of objects");
  synth->add_option("--views", sa.views, "Partials per object");
  synth->add_option("--difficulty", sa.difficulty, "simple, moderate, hard or random");
  synth->add_option("--split", sa.split, "Split name (train, test, ...)");
  synth->add_option("--complete-points", sa.complete_points, "Points per complete cloud");
  synth->add_option("--partial-points", sa.partial_points, "Points per partial cloud");
  synth->add_option("--noise", sa.noise, "Depth noise as a fraction of the bounding diagonal");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a completion model");
  train->add_option("--data", ta.data, "Dataset root written by synth");
  train->add_option("--preset", ta.preset, "desk, pcn, shapenet55 or gradcheck");
  train->add_option("--mode", ta.mode, "adapointr or pointr");
  train->add_option("--steps", ta.steps, "Stop after this many optimizer steps");
  train->add_option("--log", ta.log, "JSON-lines loss log (default <out>/train.jsonl)");
  train->add_option("--checkpoint", ta.checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");
  train->add_option("--resume", ta.resume, "Continue from a checkpoint");
  train->add_flag("--no-denoise", ta.no_denoise, "Disable the auxiliary denoise task");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--data", ea.data, "Dataset root")->required();
  eval->add_option("--checkpoint", ea.checkpoint, "Trained checkpoint");
  eval->add_option("--split", ea.split, "Split to evaluate")->capture_default_str();
  eval->add_option("--threshold", ea.threshold, "F-Score distance threshold")->capture_default_str();
  eval->add_flag("--oracle", ea.oracle, "Score ground truth against itself");

  CompleteArgs ca;
  auto* complete = app.add_subcommand("complete", "Complete one XYZ cloud");
  complete->add_option("input", ca.input, "Partial cloud (.xyz)")->required();
  complete->add_option("checkpoint", ca.checkpoint, "Trained checkpoint")->required();
  complete->add_option("output", ca.output, "Completed cloud (.xyz)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) return cmd_synth(g, sa);
    if (train->parsed()) return cmd_train(g, ta);
    if (eval->parsed()) return cmd_eval(g, ea);
    return cmd_complete(g, ca);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
