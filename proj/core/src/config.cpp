#include "proxytr/config.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "proxytr/errors.hpp"

namespace proxytr {

using nlohmann::ordered_json;

std::size_t ModelConfig::patch_size() const {
  const std::size_t generated = mode == CompletionMode::adapointr ? output_points
                                : output_points > input_points ? output_points - input_points
                                                               : 0;
  return queries ? generated / queries : 0;
}

std::pair<std::size_t, std::size_t> ModelConfig::patch_grid() const {
  const std::size_t n = patch_size();
  std::size_t rows = 1;
  for (std::size_t r = 1; r * r <= n; ++r) {
    if (n % r == 0) rows = r;
  }
  return {n / rows, rows};
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw DomainError("model config: " + msg); };
  if (input_points == 0) fail("input_points must be positive");
  if (width == 0 || heads == 0 || width % heads != 0) fail("width must be a positive multiple of heads");
  if (extractor_layers.empty()) fail("extractor needs at least one layer");
  std::size_t available = input_points;
  for (std::size_t i = 0; i < extractor_layers.size(); ++i) {
    const auto& l = extractor_layers[i];
    if (l.out_channels == 0 || l.k == 0 || l.out_points == 0) fail("extractor layer " + std::to_string(i) + " has a zero field");
    if (l.out_points > available) fail("extractor layer " + std::to_string(i) + " keeps more points than it receives");
    if (l.k > available) fail("extractor layer " + std::to_string(i) + " has k larger than its input");
    available = l.out_points;
  }
  if (extractor_layers.back().out_points != proxies) fail("last extractor layer must emit `proxies` points");
  if (k_geo == 0) fail("k_geo must be positive");
  if (encoder_depth > 0 && geometry_blocks > 0 && k_geo > proxies) fail("k_geo exceeds the proxy count");
  if (queries == 0) fail("queries must be positive");
  if (mode == CompletionMode::adapointr && queries > m_input() + m_output()) fail("queries exceed the query bank");
  if (mode == CompletionMode::pointr && output_points <= input_points) fail("pointr output must exceed the input");
  const std::size_t patch = patch_size();
  const std::size_t generated = mode == CompletionMode::adapointr ? output_points : output_points - input_points;
  if (patch == 0 || patch * queries != generated) {
    fail("generated point count " + std::to_string(generated) + " is not a multiple of " + std::to_string(queries) +
         " queries");
  }
  if (!(noise_scale >= 0.0)) fail("noise_scale must be non-negative");
  if (global_dim == 0) fail("global_dim must be positive");
}

ModelConfig ModelConfig::pcn() {
  ModelConfig c;
  c.output_points = 16384;
  c.extractor_layers = {{32, 8, 2048}, {64, 8, 512}, {64, 8, 512}, {128, 8, 256}};
  c.proxies = 256;
  c.queries = 512;
  c.input_queries = 256;
  c.output_queries = 256;
  return c;
}

ModelConfig ModelConfig::shapenet55() {
  ModelConfig c;
  c.output_points = 8192;
  c.extractor_layers = {{32, 8, 2048}, {64, 8, 512}, {64, 8, 512}, {128, 8, 256}};
  c.proxies = 256;
  c.queries = 256;
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.input_points = 256;
  c.output_points = 1024;
  c.embed_channels = 8;
  c.extractor_layers = {{16, 8, 128}, {32, 8, 64}, {32, 8, 64}, {64, 8, 32}};
  c.proxies = 32;
  c.width = 64;
  c.heads = 4;
  c.encoder_depth = 2;
  c.decoder_depth = 2;
  c.k_geo = 8;
  c.global_dim = 256;
  c.queries = 16;
  c.denoise_queries = 8;
  return c;
}

ModelConfig ModelConfig::gradcheck() {
  ModelConfig c;
  c.input_points = 12;
  c.output_points = 16;
  c.embed_channels = 4;
  c.extractor_layers = {{8, 4, 8}, {16, 4, 4}};
  c.proxies = 4;
  c.width = 16;
  c.heads = 2;
  c.encoder_depth = 1;
  c.decoder_depth = 1;
  c.k_geo = 2;
  c.global_dim = 16;
  c.queries = 4;
  c.denoise_queries = 2;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "pcn") return pcn();
  if (name == "shapenet55") return shapenet55();
  if (name == "desk") return desk();
  if (name == "gradcheck") return gradcheck();
  throw UsageError("unknown model preset '" + name + "'");
}

double TrainConfig::lr_at(std::size_t step) const {
  if (lr_decay_every == 0) return lr;
  return lr * std::pow(lr_decay, static_cast<double>(step / lr_decay_every));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw DomainError("train config: " + msg); };
  if (!(lr >= 0.0)) fail("lr must be non-negative");
  if (!(lambda >= 0.0)) fail("lambda must be non-negative");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps must be positive");
}

TrainConfig TrainConfig::pcn() {
  TrainConfig t;
  t.batch_size = 48;
  t.loss = LossConvention::euclidean;
  return t;
}

TrainConfig TrainConfig::shapenet55() {
  TrainConfig t;
  t.batch_size = 64;
  t.loss = LossConvention::squared;
  return t;
}

TrainConfig TrainConfig::desk() {
  TrainConfig t;
  t.lr = 1e-3;
  t.weight_decay = 5e-4;
  t.batch_size = 8;
  t.steps = 2000;
  t.loss = LossConvention::squared;
  return t;
}

TrainConfig TrainConfig::preset(const std::string& name) {
  if (name == "pcn") return pcn();
  if (name == "shapenet55") return shapenet55();
  if (name == "desk" || name == "gradcheck") return desk();
  throw UsageError("unknown train preset '" + name + "'");
}

bool RunConfig::same_synth(const SynthConfig& a, const SynthConfig& b) {
  // seed is ignored: it always follows RunConfig::seed.
  return a.kind == b.kind && a.count == b.count && a.split == b.split &&
         a.complete_points == b.complete_points && a.partial_points == b.partial_points && a.views == b.views &&
         a.difficulty == b.difficulty && a.noise_frac == b.noise_frac && a.resolution == b.resolution &&
         a.focal == b.focal && a.camera_distance == b.camera_distance;
}

std::string to_string(CompletionMode m) { return m == CompletionMode::pointr ? "pointr" : "adapointr"; }

CompletionMode mode_from_string(const std::string& name) {
  if (name == "pointr") return CompletionMode::pointr;
  if (name == "adapointr") return CompletionMode::adapointr;
  throw UsageError("unknown mode '" + name + "'");
}

namespace {

// Reads every key of `obj` through `visit`; keys nobody claims are errors.
class StrictReader {
 public:
  StrictReader(const ordered_json& obj, std::string section) : obj_(obj), section_(std::move(section)) {
    if (!obj_.is_object()) throw UsageError("config section '" + section_ + "' must be an object");
  }

  template <typename V>
  void field(const char* key, V& out) {
    claimed_.push_back(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config key '" + section_ + "." + key + "': " + e.what());
    }
  }

  template <typename Parse, typename V>
  void field(const char* key, V& out, Parse parse) {
    claimed_.push_back(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!it->is_string()) throw UsageError("config key '" + section_ + "." + key + "' must be a string");
    out = parse(it->template get<std::string>());
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (std::find(claimed_.begin(), claimed_.end(), it.key()) == claimed_.end()) {
        throw UsageError("unknown config key '" + section_ + "." + it.key() + "'");
      }
    }
  }

 private:
  const ordered_json& obj_;
  std::string section_;
  std::vector<std::string> claimed_;
};

ExtractorKind extractor_from_string(const std::string& s) {
  if (s == "edgeconv") return ExtractorKind::edgeconv;
  if (s == "pointlike") return ExtractorKind::pointlike;
  throw UsageError("unknown extractor '" + s + "'");
}

LossConvention loss_from_string(const std::string& s) {
  if (s == "euclidean") return LossConvention::euclidean;
  if (s == "squared") return LossConvention::squared;
  throw UsageError("unknown loss convention '" + s + "'");
}

SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "crop") return SynthKind::crop;
  if (s == "backproject") return SynthKind::backproject;
  throw UsageError("unknown synth kind '" + s + "'");
}

ordered_json model_json(const ModelConfig& c) {
  ordered_json j;
  j["mode"] = to_string(c.mode);
  j["input_points"] = c.input_points;
  j["output_points"] = c.output_points;
  j["extractor"] = c.extractor == ExtractorKind::edgeconv ? "edgeconv" : "pointlike";
  j["embed_channels"] = c.embed_channels;
  j["extractor_layers"] = ordered_json::array();
  for (const auto& l : c.extractor_layers) j["extractor_layers"].push_back({l.out_channels, l.k, l.out_points});
  j["proxies"] = c.proxies;
  j["width"] = c.width;
  j["heads"] = c.heads;
  j["ffn_hidden"] = c.ffn_hidden;
  j["encoder_depth"] = c.encoder_depth;
  j["decoder_depth"] = c.decoder_depth;
  j["k_geo"] = c.k_geo;
  j["geometry_blocks"] = c.geometry_blocks;
  j["global_dim"] = c.global_dim;
  j["queries"] = c.queries;
  j["input_queries"] = c.input_queries;
  j["output_queries"] = c.output_queries;
  j["denoise_queries"] = c.denoise_queries;
  j["noise_scale"] = c.noise_scale;
  j["fold_hidden"] = c.fold_hidden;
  return j;
}

void read_model(const ordered_json& j, ModelConfig& c) {
  StrictReader r(j, "model");
  r.field("mode", c.mode, mode_from_string);
  r.field("input_points", c.input_points);
  r.field("output_points", c.output_points);
  r.field("extractor", c.extractor, extractor_from_string);
  r.field("embed_channels", c.embed_channels);
  std::vector<std::vector<std::size_t>> layers;
  bool has_layers = j.contains("extractor_layers");
  r.field("extractor_layers", layers);
  if (has_layers) {
    c.extractor_layers.clear();
    for (const auto& l : layers) {
      if (l.size() != 3) throw UsageError("config key 'model.extractor_layers' entries are [channels, k, points]");
      c.extractor_layers.push_back({l[0], l[1], l[2]});
    }
  }
  r.field("proxies", c.proxies);
  r.field("width", c.width);
  r.field("heads", c.heads);
  r.field("ffn_hidden", c.ffn_hidden);
  r.field("encoder_depth", c.encoder_depth);
  r.field("decoder_depth", c.decoder_depth);
  r.field("k_geo", c.k_geo);
  r.field("geometry_blocks", c.geometry_blocks);
  r.field("global_dim", c.global_dim);
  r.field("queries", c.queries);
  r.field("input_queries", c.input_queries);
  r.field("output_queries", c.output_queries);
  r.field("denoise_queries", c.denoise_queries);
  r.field("noise_scale", c.noise_scale);
  r.field("fold_hidden", c.fold_hidden);
  r.finish();
}

ordered_json train_json(const TrainConfig& t) {
  ordered_json j;
  j["lr"] = t.lr;
  j["weight_decay"] = t.weight_decay;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["eps"] = t.eps;
  j["batch_size"] = t.batch_size;
  j["steps"] = t.steps;
  j["lambda"] = t.lambda;
  j["lr_decay"] = t.lr_decay;
  j["lr_decay_every"] = t.lr_decay_every;
  j["loss"] = t.loss == LossConvention::euclidean ? "euclidean" : "squared";
  j["denoise"] = t.denoise;
  j["log_every"] = t.log_every;
  j["save_every"] = t.save_every;
  j["online_crop"] = t.online_crop;
  return j;
}

void read_train(const ordered_json& j, TrainConfig& t) {
  StrictReader r(j, "train");
  r.field("lr", t.lr);
  r.field("weight_decay", t.weight_decay);
  r.field("beta1", t.beta1);
  r.field("beta2", t.beta2);
  r.field("eps", t.eps);
  r.field("batch_size", t.batch_size);
  r.field("steps", t.steps);
  r.field("lambda", t.lambda);
  r.field("lr_decay", t.lr_decay);
  r.field("lr_decay_every", t.lr_decay_every);
  r.field("loss", t.loss, loss_from_string);
  r.field("denoise", t.denoise);
  r.field("log_every", t.log_every);
  r.field("save_every", t.save_every);
  r.field("online_crop", t.online_crop);
  r.finish();
}

ordered_json synth_json(const SynthConfig& s) {
  ordered_json j;
  j["kind"] = s.kind == SynthKind::crop ? "crop" : "backproject";
  j["count"] = s.count;
  j["split"] = s.split;
  j["complete_points"] = s.complete_points;
  j["partial_points"] = s.partial_points;
  j["views"] = s.views;
  j["difficulty"] = to_string(s.difficulty);
  j["noise_frac"] = s.noise_frac;
  j["resolution"] = s.resolution;
  j["focal"] = s.focal;
  j["camera_distance"] = s.camera_distance;
  return j;
}

void read_synth(const ordered_json& j, SynthConfig& s) {
  StrictReader r(j, "synth");
  r.field("kind", s.kind, synth_kind_from_string);
  r.field("count", s.count);
  r.field("split", s.split);
  r.field("complete_points", s.complete_points);
  r.field("partial_points", s.partial_points);
  r.field("views", s.views);
  r.field("difficulty", s.difficulty, difficulty_from_string);
  r.field("noise_frac", s.noise_frac);
  r.field("resolution", s.resolution);
  r.field("focal", s.focal);
  r.field("camera_distance", s.camera_distance);
  r.finish();
}

ordered_json run_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["model"] = model_json(c.model);
  j["train"] = train_json(c.train);
  j["synth"] = synth_json(c.synth);
  return j;
}

void read_run(const ordered_json& j, RunConfig& c) {
  StrictReader r(j, "config");
  r.field("seed", c.seed);
  ordered_json section;
  if (j.contains("model")) read_model(j.at("model"), c.model);
  if (j.contains("train")) read_train(j.at("train"), c.train);
  if (j.contains("synth")) read_synth(j.at("synth"), c.synth);
  r.field("model", section);
  r.field("train", section);
  r.field("synth", section);
  r.finish();
  c.synth.seed = c.seed;
}

ordered_json parse(std::string_view text) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(std::string("malformed config JSON: ") + e.what());
  }
}

}  // namespace

std::string model_config_to_json(const ModelConfig& c) { return model_json(c).dump(); }

ModelConfig model_config_from_json(std::string_view text) {
  ModelConfig c;
  read_model(parse(text), c);
  return c;
}

std::string run_config_to_json(const RunConfig& c) { return run_json(c).dump(2); }

RunConfig run_config_from_json(std::string_view text, const RunConfig& base) {
  RunConfig c = base;
  read_run(parse(text), c);
  return c;
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw UsageError("override '" + assignment + "' is not of the form section.key=value");
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string raw = assignment.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;  // bare words are strings
  }
  ordered_json patch;
  patch[section][key] = value;
  read_run(patch, config);
}

}  // namespace proxytr
