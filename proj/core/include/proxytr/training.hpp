#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "proxytr/checkpoint.hpp"
#include "proxytr/config.hpp"
#include "proxytr/model.hpp"

namespace proxytr {

/// Two-directional mean Chamfer loss between predicted rows [n×3] and a fixed
/// target. Nearest-neighbor assignments are taken from the forward pass and
/// held constant in backward. Throws DomainError on empty input.
template <typename T>
Tensor<T> chamfer_loss(const Tensor<T>& pred, std::span<const Point3> target, LossConvention convention);

/// Mean over patches of chamfer_loss(patch_i, gt_patches[i]); patch i spans
/// rows [i·g, (i+1)·g) with g = rows / gt_patches.size().
template <typename T>
Tensor<T> denoise_loss(const Tensor<T>& patches, const std::vector<std::vector<Point3>>& gt_patches,
                       LossConvention convention);

struct LossBreakdown {
  double j0 = 0.0;
  double j1 = 0.0;
  double j_denoise = 0.0;
  double total = 0.0;
};

template <typename T>
struct LossTerms {
  Tensor<T> total;
  LossBreakdown values;
};

/// J0 + J1 + λ·J_denoise for one forward result. Throws NonFiniteLossError
/// naming the first non-finite term.
template <typename T>
LossTerms<T> completion_loss(const ModelOutput<T>& out, const PointCloud& ground_truth, const TrainConfig& config,
                             std::size_t patch_size);

/// Adaptive moments with decoupled weight decay.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const ParamRegistry<T>& params);

  /// Applies one update using the accumulated gradients.
  void step(ParamRegistry<T>& params, const TrainConfig& config, double lr);

  std::size_t steps = 0;
  std::vector<NDArray<T>> m;
  std::vector<NDArray<T>> v;
};

/// Complete clouds, plus stored partials per object when cropping is offline.
struct TrainingSet {
  std::vector<PointCloud> completes;
  std::vector<std::vector<PointCloud>> partials;
};

struct TrainingPair {
  PointCloud partial;
  PointCloud complete;
};

/// Sample `slot` of the batch for `step`; depends only on (seed, step, slot).
TrainingPair draw_training_pair(const TrainingSet& data, const ModelConfig& model, const TrainConfig& train,
                                std::uint64_t seed, std::size_t step, std::size_t slot);

std::string loss_log_line(std::size_t step, const LossBreakdown& loss, double lr);

template <typename T>
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train, std::uint64_t seed);

  /// One optimizer step over a batch; gradients are averaged over the batch.
  LossBreakdown step(const TrainingSet& data);
  /// Runs until `steps_done() == until`, writing one JSON line per logged step.
  std::vector<LossBreakdown> run(const TrainingSet& data, std::size_t until, std::ostream* log = nullptr,
                                 const std::filesystem::path& checkpoint = {});

  std::size_t steps_done() const noexcept { return optimizer_.steps; }
  CompletionModel<T>& model() noexcept { return model_; }
  const CompletionModel<T>& model() const noexcept { return model_; }
  const TrainConfig& train_config() const noexcept { return train_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<CheckpointEntry> checkpoint_entries() const;
  void save(const std::filesystem::path& path) const;
  /// Rebuilds the trainer, including optimizer state, from a checkpoint.
  static Trainer load(const std::filesystem::path& path);

 private:
  CompletionModel<T> model_;
  TrainConfig train_;
  std::uint64_t seed_;
  AdamW<T> optimizer_;
};

/// Weight entries "param/<name>" of a model.
template <typename T>
std::vector<CheckpointEntry> model_entries(const CompletionModel<T>& model);
/// Copies "param/<name>" entries into the model. Throws CheckpointError naming
/// the tensor on a missing entry or shape mismatch.
template <typename T>
void load_model_entries(CompletionModel<T>& model, const std::vector<CheckpointEntry>& entries);

/// Stored run configuration of a checkpoint written by Trainer::save.
RunConfig checkpoint_run_config(const std::vector<CheckpointEntry>& entries);
/// Model configured and initialized from a checkpoint.
CompletionModel<float> load_model(const std::filesystem::path& path);

}  // namespace proxytr
