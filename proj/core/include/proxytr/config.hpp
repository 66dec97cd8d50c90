#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "proxytr/datagen.hpp"

namespace proxytr {

/// pointr: decoder predicts missing-part proxies; output = input ⧺ patches.
/// adapointr: input and missing proxies are rebuilt together by the shared head.
enum class CompletionMode { pointr, adapointr };

/// edgeconv is the load-bearing extractor; pointlike drops the relative
/// neighbor term (ablation switch).
enum class ExtractorKind { edgeconv, pointlike };

struct EdgeConvSpec {
  std::size_t out_channels = 0;
  std::size_t k = 8;
  std::size_t out_points = 0;

  friend bool operator==(const EdgeConvSpec&, const EdgeConvSpec&) = default;
};

struct ModelConfig {
  CompletionMode mode = CompletionMode::adapointr;
  std::size_t input_points = 2048;
  std::size_t output_points = 8192;

  ExtractorKind extractor = ExtractorKind::edgeconv;
  std::size_t embed_channels = 8;
  std::vector<EdgeConvSpec> extractor_layers;
  std::size_t proxies = 256;  // N

  std::size_t width = 384;  // C
  std::size_t heads = 6;
  std::size_t ffn_hidden = 0;  // 0 → 4·width
  std::size_t encoder_depth = 6;
  std::size_t decoder_depth = 8;
  std::size_t k_geo = 8;
  std::size_t geometry_blocks = 1;  // leading blocks per stack carrying the kNN path

  std::size_t global_dim = 1024;
  std::size_t queries = 256;        // M
  std::size_t input_queries = 0;    // M_I, 0 → M
  std::size_t output_queries = 0;   // M_O, 0 → M
  std::size_t denoise_queries = 64; // k_dn
  double noise_scale = 0.05;        // fraction of the ground-truth bounding-box diagonal

  std::size_t fold_hidden = 0;  // 0 → 2·width

  std::size_t ffn_width() const { return ffn_hidden ? ffn_hidden : 4 * width; }
  std::size_t fold_width() const { return fold_hidden ? fold_hidden : 2 * width; }
  std::size_t m_input() const { return input_queries ? input_queries : queries; }
  /// pointr mode always generates exactly `queries` output-side proxies.
  std::size_t m_output() const {
    return mode == CompletionMode::pointr || !output_queries ? queries : output_queries;
  }
  /// Points generated per rebuilt proxy.
  std::size_t patch_size() const;
  /// Seed grid (columns, rows) whose product is patch_size(), as square as possible.
  std::pair<std::size_t, std::size_t> patch_grid() const;

  /// Throws DomainError describing the first inconsistency.
  void validate() const;

  /// PCN benchmark: 2048 in, 512 proxies × 32 = 16384 out.
  static ModelConfig pcn();
  /// ShapeNet-55 benchmark: 2048 in, 8192 out.
  static ModelConfig shapenet55();
  /// Single-core experiment scale: 256 in, 1024 out.
  static ModelConfig desk();
  /// Tiny double-precision gradient-check configuration.
  static ModelConfig gradcheck();
  static ModelConfig preset(const std::string& name);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-point distance used inside the Chamfer training losses.
/// euclidean is the sum-of-directional-means form with ‖·‖; squared uses ‖·‖².
enum class LossConvention { euclidean, squared };

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t steps = 2000;
  double lambda = 1.0;
  double lr_decay = 1.0;            // multiplicative factor ...
  std::size_t lr_decay_every = 0;   // ... applied every this many steps (0 = constant)
  LossConvention loss = LossConvention::euclidean;
  bool denoise = true;
  std::size_t log_every = 1;
  std::size_t save_every = 0;
  bool online_crop = true;

  double lr_at(std::size_t step) const;
  void validate() const;

  /// The loss convention follows each benchmark's reported metric: cd_l1 for
  /// PCN, cd_l2 for ShapeNet-55 and the desk experiments.
  static TrainConfig pcn();
  static TrainConfig shapenet55();
  /// Constant lr 1e-3, batch 8, 2000 steps.
  static TrainConfig desk();
  /// Same names as ModelConfig::preset; gradcheck maps to desk.
  static TrainConfig preset(const std::string& name);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything a CLI run needs; serialized as nested JSON with unknown keys rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model = ModelConfig::desk();
  TrainConfig train = TrainConfig::desk();
  SynthConfig synth;

  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.seed == b.seed && a.model == b.model && a.train == b.train && same_synth(a.synth, b.synth);
  }

 private:
  static bool same_synth(const SynthConfig& a, const SynthConfig& b);
};

std::string to_string(CompletionMode m);
CompletionMode mode_from_string(const std::string& name);

std::string model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(std::string_view text);

std::string run_config_to_json(const RunConfig& c);
/// Keys absent from `text` keep their values from `base`.
RunConfig run_config_from_json(std::string_view text, const RunConfig& base = RunConfig{});
/// Applies one `section.key=value` override, validating the key.
void apply_override(RunConfig& config, const std::string& assignment);

}  // namespace proxytr
