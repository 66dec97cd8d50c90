#include "proxytr/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "proxytr/errors.hpp"

namespace proxytr {

AttentionMask AttentionMask::full(std::size_t rows, std::size_t cols) {
  return AttentionMask{rows, cols, std::vector<std::uint8_t>(rows * cols, 1)};
}

AttentionMask AttentionMask::from_groups(const std::vector<std::size_t>& group) {
  const std::size_t n = group.size();
  AttentionMask m{n, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m.allowed[i * n + j] = group[i] == group[j] ? 1 : 0;
  }
  return m;
}

void AttentionMask::validate(std::size_t expected_rows, std::size_t expected_cols) const {
  if (rows != expected_rows || cols != expected_cols || allowed.size() != rows * cols) {
    throw UsageError("attention mask is " + std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                     std::to_string(expected_rows) + "x" + std::to_string(expected_cols));
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const auto* row = allowed.data() + i * cols;
    if (std::none_of(row, row + cols, [](std::uint8_t v) { return v != 0; })) {
      throw DomainError("attention mask row " + std::to_string(i) + " blocks every key");
    }
  }
}

template <typename T>
std::vector<Point3> to_points(const NDArray<T>& xyz) {
  if (xyz.rank() != 2 || xyz.cols() != 3) throw DimensionError("expected an [n x 3] coordinate array");
  std::vector<Point3> out(xyz.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {static_cast<double>(xyz.at(i, 0)), static_cast<double>(xyz.at(i, 1)),
              static_cast<double>(xyz.at(i, 2))};
  }
  return out;
}

NeighborIndex masked_knn(const std::vector<Point3>& coords, const AttentionMask* mask, std::size_t k) {
  const std::size_t n = coords.size();
  if (k == 0) throw DomainError("kNN path needs k >= 1");
  if (n < k) {
    throw DomainError("kNN path needs at least " + std::to_string(k) + " points, got " + std::to_string(n));
  }
  if (!mask) return knn(coords, coords, k);
  NeighborIndex out{n, k, std::vector<std::size_t>(n * k)};
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if ((*mask)(i, j)) cand.emplace_back(squared_distance(coords[i], coords[j]), j);
    }
    const std::size_t take = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
    for (std::size_t r = 0; r < k; ++r) out.indices[i * k + r] = cand[r < take ? r : 0].second;
  }
  return out;
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParamRegistry<T>& registry, const std::string& name, std::size_t width,
                                          std::size_t heads_)
    : heads(heads_),
      wq(registry, name + ".q", width, width),
      wk(registry, name + ".k", width, width),
      wv(registry, name + ".v", width, width),
      wo(registry, name + ".o", width, width) {
  if (heads == 0 || width % heads != 0) throw DomainError("attention width must be a multiple of the head count");
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                            const AttentionMask* mask) const {
  const std::size_t c = width();
  if (q.cols() != c || k.cols() != c || v.cols() != c) throw DimensionError("attention inputs must have the model width");
  if (k.rows() != v.rows()) throw DimensionError("attention keys and values must have equal row counts");
  if (mask) mask->validate(q.rows(), k.rows());
  const Tensor<T> qp = wq(q), kp = wk(k), vp = wv(v);
  const std::size_t d = c / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<Tensor<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = heads == 1 ? qp : slice_cols(qp, h * d, (h + 1) * d);
    const auto kh = heads == 1 ? kp : slice_cols(kp, h * d, (h + 1) * d);
    const auto vh = heads == 1 ? vp : slice_cols(vp, h * d, (h + 1) * d);
    const auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    const auto probs = mask ? masked_softmax(scores, mask->allowed) : softmax(scores, 1);
    outs.push_back(matmul(probs, vh));
  }
  return wo(heads == 1 ? outs.front() : concat_cols(outs));
}

template <typename T>
GeometryPath<T>::GeometryPath(ParamRegistry<T>& registry, const std::string& name, std::size_t width,
                              std::size_t k_)
    : k(k_), edge(registry, name + ".edge", 2 * width, width), merge(registry, name + ".merge", 2 * width, width) {}

template <typename T>
Tensor<T> GeometryPath<T>::operator()(const Tensor<T>& normed, const Tensor<T>& attended,
                                      const std::vector<Point3>& coords, const AttentionMask* mask) const {
  const NeighborIndex nbrs = masked_knn(coords, mask, k);
  std::vector<std::size_t> all(coords.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor<T> local = edge_max_pool(normed, all, nbrs, edge);
  return merge(concat_cols(std::vector<Tensor<T>>{attended, local}));
}

template <typename T>
FeedForward<T>::FeedForward(ParamRegistry<T>& registry, const std::string& name, std::size_t width,
                            std::size_t hidden)
    : fc1(registry, name + ".fc1", width, hidden), fc2(registry, name + ".fc2", hidden, width) {}

void BlockConfig::validate() const {
  if (heads == 0 || width == 0 || width % heads != 0) throw DomainError("block width must be a multiple of heads");
  if (k_geo == 0) throw DomainError("k_geo must be at least 1");
  if (ffn_hidden == 0) throw DomainError("FFN hidden width must be positive");
}

namespace {

template <typename T>
void check_state(const ProxySequenceState<T>& s, std::size_t width) {
  if (!s.features.defined() || s.features.rank() != 2 || s.features.rows() != s.coords.size() ||
      s.features.cols() != width) {
    throw DimensionError("sequence state needs one width-" + std::to_string(width) + " feature row per coordinate");
  }
}

}  // namespace

template <typename T>
EncoderBlock<T>::EncoderBlock(ParamRegistry<T>& registry, const std::string& name, const BlockConfig& cfg)
    : config(cfg),
      norm1(registry, name + ".norm1", cfg.width),
      norm2(registry, name + ".norm2", cfg.width),
      attn(registry, name + ".attn", cfg.width, cfg.heads),
      ffn(registry, name + ".ffn", cfg.width, cfg.ffn_hidden) {
  cfg.validate();
  if (cfg.geometry) geo = GeometryPath<T>(registry, name + ".geo", cfg.width, cfg.k_geo);
}

template <typename T>
ProxySequenceState<T> EncoderBlock<T>::operator()(const ProxySequenceState<T>& state) const {
  check_state(state, config.width);
  const Tensor<T> h = norm1(state.features);
  Tensor<T> a = attn(h, h, h);
  if (config.geometry) a = geo(h, a, state.coords, nullptr);
  Tensor<T> x = add(state.features, a);
  x = add(x, ffn(norm2(x)));
  return {state.coords, x};
}

template <typename T>
DecoderBlock<T>::DecoderBlock(ParamRegistry<T>& registry, const std::string& name, const BlockConfig& cfg)
    : config(cfg),
      norm1(registry, name + ".norm1", cfg.width),
      norm2(registry, name + ".norm2", cfg.width),
      norm3(registry, name + ".norm3", cfg.width),
      self_attn(registry, name + ".self_attn", cfg.width, cfg.heads),
      cross_attn(registry, name + ".cross_attn", cfg.width, cfg.heads),
      ffn(registry, name + ".ffn", cfg.width, cfg.ffn_hidden) {
  cfg.validate();
  if (cfg.geometry) geo = GeometryPath<T>(registry, name + ".geo", cfg.width, cfg.k_geo);
}

template <typename T>
ProxySequenceState<T> DecoderBlock<T>::operator()(const ProxySequenceState<T>& queries, const Tensor<T>& memory,
                                                  const AttentionMask& mask) const {
  check_state(queries, config.width);
  const Tensor<T> h = norm1(queries.features);
  Tensor<T> a = self_attn(h, h, h, &mask);
  if (config.geometry) a = geo(h, a, queries.coords, &mask);
  Tensor<T> x = add(queries.features, a);
  x = add(x, cross_attn(norm2(x), memory, memory));
  x = add(x, ffn(norm3(x)));
  return {queries.coords, x};
}

template <typename T>
Encoder<T>::Encoder(ParamRegistry<T>& registry, const std::string& name, const BlockConfig& cfg, std::size_t depth,
                    std::size_t geometry_blocks) {
  for (std::size_t i = 0; i < depth; ++i) {
    BlockConfig b = cfg;
    b.geometry = i < geometry_blocks;
    blocks.emplace_back(registry, name + ".block" + std::to_string(i), b);
  }
  if (depth > 0) final_norm = LayerNorm<T>(registry, name + ".norm", cfg.width);
}

template <typename T>
ProxySequenceState<T> Encoder<T>::operator()(const ProxySequenceState<T>& state) const {
  if (blocks.empty()) return state;
  ProxySequenceState<T> s = state;
  for (const auto& b : blocks) s = b(s);
  s.features = final_norm(s.features);
  return s;
}

template <typename T>
Decoder<T>::Decoder(ParamRegistry<T>& registry, const std::string& name, const BlockConfig& cfg, std::size_t depth,
                    std::size_t geometry_blocks) {
  for (std::size_t i = 0; i < depth; ++i) {
    BlockConfig b = cfg;
    b.geometry = i < geometry_blocks;
    blocks.emplace_back(registry, name + ".block" + std::to_string(i), b);
  }
  if (depth > 0) final_norm = LayerNorm<T>(registry, name + ".norm", cfg.width);
}

template <typename T>
ProxySequenceState<T> Decoder<T>::operator()(const ProxySequenceState<T>& queries,
                                             const ProxySequenceState<T>& memory, const AttentionMask& mask) const {
  mask.validate(queries.size(), queries.size());
  if (blocks.empty()) return queries;
  ProxySequenceState<T> s = queries;
  for (const auto& b : blocks) s = b(s, memory.features, mask);
  s.features = final_norm(s.features);
  return s;
}

#define PROXYTR_INSTANTIATE_ATTENTION(T)                  \
  template std::vector<Point3> to_points(const NDArray<T>&); \
  template class MultiHeadAttention<T>;                   \
  template class GeometryPath<T>;                         \
  template class FeedForward<T>;                          \
  template class EncoderBlock<T>;                         \
  template class DecoderBlock<T>;                         \
  template class Encoder<T>;                              \
  template class Decoder<T>;

PROXYTR_INSTANTIATE_ATTENTION(float)
PROXYTR_INSTANTIATE_ATTENTION(double)

}  // namespace proxytr
