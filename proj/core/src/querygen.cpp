#include "proxytr/querygen.hpp"

#include <algorithm>
#include <numeric>

#include "proxytr/errors.hpp"
#include "proxytr/proxy.hpp"

namespace proxytr {

std::vector<std::size_t> top_m_indices(std::span<const double> scores, std::size_t m) {
  if (m > scores.size()) {
    throw DomainError("cannot select " + std::to_string(m) + " of " + std::to_string(scores.size()) + " queries");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

void NoiseSpec::validate() const {
  if (!(scale >= 0.0)) throw DomainError("noise scale must be non-negative");
}

AttentionMask group_mask(std::size_t normal, std::size_t noise) {
  std::vector<std::size_t> group(normal + noise, 0);
  std::fill(group.begin() + static_cast<std::ptrdiff_t>(normal), group.end(), 1);
  return AttentionMask::from_groups(group);
}

template <typename T>
QueryGenerator<T>::QueryGenerator(ParamRegistry<T>& registry, const std::string& name, const ModelConfig& config)
    : m_input(config.mode == CompletionMode::adapointr ? config.m_input() : 0), m_output(config.m_output()) {
  const std::size_t c = config.width, d = config.global_dim;
  if (m_input > 0) {
    pool_in = Linear<T>(registry, name + ".pool_in", c, d);
    coord_in = Linear<T>(registry, name + ".coord_in", d, 3 * m_input);
  }
  pool_out = Linear<T>(registry, name + ".pool_out", c, d);
  coord_out = Linear<T>(registry, name + ".coord_out", d, 3 * m_output);
  mlp1 = Linear<T>(registry, name + ".mlp1", 3 + d, c);
  mlp2 = Linear<T>(registry, name + ".mlp2", c, c);
  if (config.mode == CompletionMode::adapointr) scorer = Linear<T>(registry, name + ".score", c, 1);
}

template <typename T>
Tensor<T> QueryGenerator<T>::pool_input(const Tensor<T>& proxies) const {
  return reshape(max(pool_in(proxies), 0), Shape{1, pool_in.out_features()});
}

template <typename T>
Tensor<T> QueryGenerator<T>::pool_output(const Tensor<T>& memory) const {
  return reshape(max(pool_out(memory), 0), Shape{1, pool_out.out_features()});
}

template <typename T>
Tensor<T> QueryGenerator<T>::query_features(const Tensor<T>& coords, const Tensor<T>& global) const {
  const std::vector<std::size_t> repeat(coords.rows(), 0);
  const Tensor<T> g = gather_rows(global, repeat);
  return mlp2(relu(mlp1(concat_cols(std::vector<Tensor<T>>{coords, g}))));
}

template <typename T>
QueryBank<T> QueryGenerator<T>::dynamic_queries(const Tensor<T>& global, std::size_t m, bool input_side) const {
  const Linear<T>& head = input_side ? coord_in : coord_out;
  if (head.out_features() != 3 * m) throw DimensionError("query coordinate head does not emit " + std::to_string(m) + " queries");
  QueryBank<T> bank;
  bank.coords = reshape(head(global), Shape{m, 3});
  bank.features = query_features(bank.coords, global);
  bank.origin.assign(m, input_side ? QueryOrigin::input : QueryOrigin::output);
  return bank;
}

template <typename T>
QueryBank<T> QueryGenerator<T>::adaptive_bank(const Tensor<T>& proxies, const Tensor<T>& memory) const {
  if (proxies.rows() == 0 || memory.rows() == 0) throw DomainError("query bank needs non-empty proxies and memory");
  if (m_input == 0) return dynamic_queries(pool_output(memory), m_output, false);
  return bank_from(pool_input(proxies), pool_output(memory));
}

template <typename T>
QueryBank<T> QueryGenerator<T>::bank_from(const Tensor<T>& global_input, const Tensor<T>& global_output) const {
  if (m_input == 0) throw UsageError("this generator has no input-side queries");
  QueryBank<T> in = dynamic_queries(global_input, m_input, true);
  QueryBank<T> out = dynamic_queries(global_output, m_output, false);
  QueryBank<T> bank;
  bank.coords = concat_rows(std::vector<Tensor<T>>{in.coords, out.coords});
  bank.features = concat_rows(std::vector<Tensor<T>>{in.features, out.features});
  bank.origin = in.origin;
  bank.origin.insert(bank.origin.end(), out.origin.begin(), out.origin.end());
  bank.scores = sigmoid(scorer(bank.features));
  return bank;
}

template <typename T>
QueryBank<T> QueryGenerator<T>::select(const QueryBank<T>& bank, std::size_t m,
                                       std::vector<std::size_t>* chosen) const {
  if (!bank.scores.defined()) throw UsageError("query selection needs a scored bank");
  std::vector<double> s(bank.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(bank.scores.value()[i]);
  const std::vector<std::size_t> idx = top_m_indices(s, m);
  QueryBank<T> out;
  out.coords = gather_rows(bank.coords, idx);
  out.scores = gather_rows(bank.scores, idx);
  out.features = mul(gather_rows(bank.features, idx), out.scores);
  for (std::size_t i : idx) out.origin.push_back(bank.origin[i]);
  if (chosen) *chosen = idx;
  return out;
}

template <typename T>
DenoiseQueries<T> QueryGenerator<T>::denoise_queries(const PointCloud& ground_truth, const Tensor<T>& global_output,
                                                     const NoiseSpec& spec, Rng& rng) const {
  spec.validate();
  if (spec.count > ground_truth.size()) {
    throw DomainError("cannot draw " + std::to_string(spec.count) + " denoise centers from " +
                      std::to_string(ground_truth.size()) + " ground-truth points");
  }
  DenoiseQueries<T> dn;
  for (std::size_t i : fps(ground_truth, spec.count, 0)) dn.gt_centers.push_back(ground_truth[i]);
  const double amp = spec.scale * ground_truth.diagonal();
  std::vector<Point3> noised = dn.gt_centers;
  for (auto& p : noised) {
    p.x += rng.uniform(-amp, amp);
    p.y += rng.uniform(-amp, amp);
    p.z += rng.uniform(-amp, amp);
  }
  dn.coords = points_tensor<T>(noised);
  dn.features = query_features(dn.coords, global_output);
  // Same treatment as selected bank entries.
  if (scorer.weight.defined()) dn.features = mul(dn.features, sigmoid(scorer(dn.features)));
  return dn;
}

template class QueryGenerator<float>;
template class QueryGenerator<double>;

}  // namespace proxytr
