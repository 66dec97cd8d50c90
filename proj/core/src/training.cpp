#include "proxytr/training.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>

#include "proxytr/datagen.hpp"
#include "proxytr/errors.hpp"

namespace proxytr {

template <typename T>
Tensor<T> chamfer_loss(const Tensor<T>& pred, std::span<const Point3> target, LossConvention convention) {
  if (pred.rank() != 2 || pred.cols() != 3) throw DimensionError("chamfer loss expects [n x 3] predictions");
  const std::size_t n = pred.rows(), m = target.size();
  if (n == 0 || m == 0) throw DomainError("chamfer loss of an empty cloud");
  if (!pred.value().all_finite()) {
    return record<T>(NDArray<T>(Shape{}, std::numeric_limits<T>::quiet_NaN()), {pred}, "chamfer_loss",
                     [](detail::Node<T>&) {});
  }
  const std::vector<Point3> p = to_points(pred.value());
  const NeighborIndex to_target = knn(target, p, 1);
  const NeighborIndex to_pred = knn(p, target, 1);

  const bool squared = convention == LossConvention::squared;
  // d(term)/d(pred row), accumulated per row with weight 1/n or 1/m.
  auto grad = std::make_shared<std::vector<double>>(n * 3, 0.0);
  auto edge = [&](std::size_t i, Point3 g, double weight) {
    const Point3 d = p[i] - g;
    const double d2 = dot(d, d);
    double coeff;
    double value;
    if (squared) {
      value = d2;
      coeff = 2.0 * weight;
    } else {
      value = std::sqrt(d2);
      coeff = value > 0.0 ? weight / value : 0.0;
    }
    (*grad)[i * 3 + 0] += coeff * d.x;
    (*grad)[i * 3 + 1] += coeff * d.y;
    (*grad)[i * 3 + 2] += coeff * d.z;
    return value;
  };
  double forward = 0.0, backward = 0.0;
  for (std::size_t i = 0; i < n; ++i) forward += edge(i, target[to_target.indices[i]], 1.0 / double(n));
  for (std::size_t j = 0; j < m; ++j) backward += edge(to_pred.indices[j], target[j], 1.0 / double(m));
  const double value = forward / double(n) + backward / double(m);

  return record<T>(NDArray<T>(Shape{}, static_cast<T>(value)), {pred}, "chamfer_loss", [grad](detail::Node<T>& node) {
    if (auto* gp = input_grad(node, 0)) {
      const T g = node.grad[0];
      for (std::size_t i = 0; i < grad->size(); ++i) (*gp)[i] += g * static_cast<T>((*grad)[i]);
    }
  });
}

template <typename T>
Tensor<T> denoise_loss(const Tensor<T>& patches, const std::vector<std::vector<Point3>>& gt_patches,
                       LossConvention convention) {
  const std::size_t k = gt_patches.size();
  if (k == 0) return Tensor<T>::scalar(T(0));
  if (patches.rows() % k != 0) {
    throw UsageError("denoise loss: " + std::to_string(patches.rows()) + " rows do not split into " +
                     std::to_string(k) + " patches");
  }
  const std::size_t g = patches.rows() / k;
  Tensor<T> total;
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor<T> term = chamfer_loss(slice_rows(patches, i * g, (i + 1) * g), gt_patches[i], convention);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, T(1) / static_cast<T>(k));
}

template <typename T>
LossTerms<T> completion_loss(const ModelOutput<T>& out, const PointCloud& ground_truth, const TrainConfig& config,
                             std::size_t patch_size) {
  auto checked = [](const Tensor<T>& t, const char* term) {
    const double v = static_cast<double>(t.item());
    if (!std::isfinite(v)) throw NonFiniteLossError(std::string("loss term ") + term + " is not finite");
    return v;
  };
  LossTerms<T> r;
  const Tensor<T> j0 = chamfer_loss(out.coarse, ground_truth.points(), config.loss);
  const Tensor<T> j1 = chamfer_loss(out.dense, ground_truth.points(), config.loss);
  r.values.j0 = checked(j0, "j0");
  r.values.j1 = checked(j1, "j1");
  r.total = add(j0, j1);
  if (out.denoise_patches.defined() && !out.denoise_centers.empty()) {
    const auto gt = ground_truth_patches(ground_truth, out.denoise_centers, patch_size);
    const Tensor<T> jd = denoise_loss(out.denoise_patches, gt, config.loss);
    r.values.j_denoise = checked(jd, "j_denoise");
    r.total = add(r.total, scale(jd, static_cast<T>(config.lambda)));
  }
  r.values.total = checked(r.total, "total");
  return r;
}

template <typename T>
AdamW<T>::AdamW(const ParamRegistry<T>& params) {
  for (const auto& p : params.params()) {
    m.emplace_back(p.tensor.shape());
    v.emplace_back(p.tensor.shape());
  }
}

template <typename T>
void AdamW<T>::step(ParamRegistry<T>& params, const TrainConfig& config, double lr) {
  const auto& list = params.params();
  if (list.size() != m.size()) throw UsageError("optimizer state does not match the parameter list");
  ++steps;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(steps));
  for (std::size_t i = 0; i < list.size(); ++i) {
    Tensor<T> p = list[i].tensor;
    auto& value = p.mutable_value();
    const bool has = p.has_grad();
    for (std::size_t j = 0; j < value.numel(); ++j) {
      const double g = has ? static_cast<double>(p.grad()[j]) : 0.0;
      const double mj = config.beta1 * static_cast<double>(m[i][j]) + (1.0 - config.beta1) * g;
      const double vj = config.beta2 * static_cast<double>(v[i][j]) + (1.0 - config.beta2) * g * g;
      m[i][j] = static_cast<T>(mj);
      v[i][j] = static_cast<T>(vj);
      if (lr == 0.0) continue;
      double w = static_cast<double>(value[j]);
      w -= lr * config.weight_decay * w;
      w -= lr * (mj / c1) / (std::sqrt(vj / c2) + config.eps);
      value[j] = static_cast<T>(w);
    }
  }
}

TrainingPair draw_training_pair(const TrainingSet& data, const ModelConfig& model, const TrainConfig& train,
                                std::uint64_t seed, std::size_t step, std::size_t slot) {
  if (data.completes.empty()) throw UsageError("training set is empty");
  Rng rng = Rng::derive(seed, step, slot);
  const std::size_t obj = rng.below(data.completes.size());
  const PointCloud& complete = data.completes[obj];
  const bool stored = !train.online_crop && obj < data.partials.size() && !data.partials[obj].empty();
  if (!stored) {
    const Point3 dir = random_direction(rng);
    const std::size_t n = random_removal_count(complete.size(), rng);
    return {crop_partial(complete, dir, n, model.input_points, rng).partial, complete};
  }
  const auto& views = data.partials[obj];
  const PointCloud& partial = views[rng.below(views.size())];
  if (partial.size() == model.input_points) return {partial, complete};
  return {resample(partial, model.input_points, rng), complete};
}

std::string loss_log_line(std::size_t step, const LossBreakdown& loss, double lr) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["j0"] = loss.j0;
  j["j1"] = loss.j1;
  j["j_denoise"] = loss.j_denoise;
  j["total"] = loss.total;
  j["lr"] = lr;
  return j.dump();
}

template <typename T>
Trainer<T>::Trainer(const ModelConfig& model, const TrainConfig& train, std::uint64_t seed)
    : model_(model, seed), train_(train), seed_(seed) {
  train_.validate();
  optimizer_ = AdamW<T>(model_.params());
}

template <typename T>
LossBreakdown Trainer<T>::step(const TrainingSet& data) {
  const std::size_t index = optimizer_.steps;
  const std::size_t batch = train_.batch_size;
  const ModelConfig& mc = model_.config();
  model_.params().zero_grad();
  LossBreakdown mean;
  const T inv = T(1) / static_cast<T>(batch);
  for (std::size_t slot = 0; slot < batch; ++slot) {
    const TrainingPair pair = draw_training_pair(data, mc, train_, seed_, index, slot);
    Rng noise_rng = Rng::derive(seed_, index, batch + slot);
    DenoiseRequest request{&pair.complete, NoiseSpec{train_.denoise ? mc.denoise_queries : 0, mc.noise_scale},
                           &noise_rng};
    LossTerms<T> terms;
    try {
      terms = completion_loss(model_.forward(pair.partial, &request), pair.complete, train_, mc.patch_size());
    } catch (const NonFiniteLossError& e) {
      throw NonFiniteLossError("step " + std::to_string(index) + ", batch slot " + std::to_string(slot) + ": " +
                               e.what());
    }
    scale(terms.total, inv).backward();
    mean.j0 += terms.values.j0 / double(batch);
    mean.j1 += terms.values.j1 / double(batch);
    mean.j_denoise += terms.values.j_denoise / double(batch);
    mean.total += terms.values.total / double(batch);
  }
  optimizer_.step(model_.params(), train_, train_.lr_at(index));
  return mean;
}

template <typename T>
std::vector<LossBreakdown> Trainer<T>::run(const TrainingSet& data, std::size_t until, std::ostream* log,
                                           const std::filesystem::path& checkpoint) {
  std::vector<LossBreakdown> history;
  while (optimizer_.steps < until) {
    const std::size_t index = optimizer_.steps;
    const LossBreakdown loss = step(data);
    history.push_back(loss);
    if (log && train_.log_every && index % train_.log_every == 0) {
      *log << loss_log_line(index, loss, train_.lr_at(index)) << '\n';
      log->flush();
    }
    if (!checkpoint.empty() && train_.save_every && optimizer_.steps % train_.save_every == 0) save(checkpoint);
  }
  if (!checkpoint.empty()) save(checkpoint);
  return history;
}

namespace {

constexpr const char* kRunConfigEntry = "meta/run_config";
constexpr const char* kStepEntry = "state/step";

const CheckpointEntry* find_entry(const std::vector<CheckpointEntry>& entries, const std::string& name) {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
NDArray<T> take(const std::vector<CheckpointEntry>& entries, const std::string& name, const Shape& shape) {
  const CheckpointEntry* e = find_entry(entries, name);
  if (!e) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  if (e->shape != shape) {
    throw CheckpointError("shape mismatch for tensor '" + name + "': checkpoint " + shape_to_string(e->shape) +
                          ", model " + shape_to_string(shape));
  }
  return e->to_array<T>();
}

}  // namespace

template <typename T>
std::vector<CheckpointEntry> model_entries(const CompletionModel<T>& model) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : model.params().params()) {
    out.push_back(CheckpointEntry::from("param/" + p.name, p.tensor.value()));
  }
  return out;
}

template <typename T>
void load_model_entries(CompletionModel<T>& model, const std::vector<CheckpointEntry>& entries) {
  for (const auto& p : model.params().params()) {
    Tensor<T> t = p.tensor;
    t.mutable_value() = take<T>(entries, "param/" + p.name, t.shape());
  }
}

template <typename T>
std::vector<CheckpointEntry> Trainer<T>::checkpoint_entries() const {
  RunConfig rc;
  rc.seed = seed_;
  rc.model = model_.config();
  rc.train = train_;
  const std::string json = run_config_to_json(rc);
  std::vector<CheckpointEntry> out;
  out.push_back({kRunConfigEntry, DType::f64, Shape{json.size()}, std::vector<double>(json.begin(), json.end())});
  out.push_back({kStepEntry, DType::f64, Shape{1}, {static_cast<double>(optimizer_.steps)}});
  auto weights = model_entries(model_);
  out.insert(out.end(), weights.begin(), weights.end());
  const auto& params = model_.params().params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(CheckpointEntry::from("adam_m/" + params[i].name, optimizer_.m[i]));
    out.push_back(CheckpointEntry::from("adam_v/" + params[i].name, optimizer_.v[i]));
  }
  return out;
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) const {
  write_checkpoint(path, checkpoint_entries());
}

RunConfig checkpoint_run_config(const std::vector<CheckpointEntry>& entries) {
  const CheckpointEntry* e = find_entry(entries, kRunConfigEntry);
  if (!e) throw CheckpointError("checkpoint has no run configuration");
  std::string json;
  json.reserve(e->values.size());
  for (double c : e->values) json.push_back(static_cast<char>(static_cast<int>(c)));
  return run_config_from_json(json);
}

template <typename T>
Trainer<T> Trainer<T>::load(const std::filesystem::path& path) {
  const auto entries = read_checkpoint(path);
  const RunConfig rc = checkpoint_run_config(entries);
  Trainer<T> t(rc.model, rc.train, rc.seed);
  load_model_entries(t.model_, entries);
  const auto& params = t.model_.params().params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    t.optimizer_.m[i] = take<T>(entries, "adam_m/" + params[i].name, params[i].tensor.shape());
    t.optimizer_.v[i] = take<T>(entries, "adam_v/" + params[i].name, params[i].tensor.shape());
  }
  const CheckpointEntry* step = find_entry(entries, kStepEntry);
  if (!step || step->values.size() != 1) throw CheckpointError("checkpoint has no step counter");
  t.optimizer_.steps = static_cast<std::size_t>(step->values[0]);
  return t;
}

CompletionModel<float> load_model(const std::filesystem::path& path) {
  const auto entries = read_checkpoint(path);
  const RunConfig rc = checkpoint_run_config(entries);
  CompletionModel<float> model(rc.model, rc.seed);
  load_model_entries(model, entries);
  return model;
}

#define PROXYTR_INSTANTIATE_TRAINING(T)                                                                   \
  template Tensor<T> chamfer_loss(const Tensor<T>&, std::span<const Point3>, LossConvention);           \
  template Tensor<T> denoise_loss(const Tensor<T>&, const std::vector<std::vector<Point3>>&, LossConvention); \
  template LossTerms<T> completion_loss(const ModelOutput<T>&, const PointCloud&, const TrainConfig&, std::size_t); \
  template class AdamW<T>;                                                                              \
  template class Trainer<T>;                                                                            \
  template std::vector<CheckpointEntry> model_entries(const CompletionModel<T>&);                       \
  template void load_model_entries(CompletionModel<T>&, const std::vector<CheckpointEntry>&);

PROXYTR_INSTANTIATE_TRAINING(float)
PROXYTR_INSTANTIATE_TRAINING(double)

}  // namespace proxytr
