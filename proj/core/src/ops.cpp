#include "proxytr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "proxytr/errors.hpp"

namespace proxytr {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

// C[m×n] += A[m×k] · B[k×n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  MMap<T>(c, m, n).noalias() += CMap<T>(a, m, k) * CMap<T>(b, k, n);
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  MMap<T>(c, m, n).noalias() += CMap<T>(a, m, k) * CMap<T>(b, n, k).transpose();
}

// C[m×n] += A[k×m]ᵀ · B[k×n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t n) {
  MMap<T>(c, m, n).noalias() += CMap<T>(a, k, m).transpose() * CMap<T>(b, k, n);
}

template <typename T>
void require_matrix(const Tensor<T>& x, const char* op) {
  if (!x.defined()) throw UsageError(std::string(op) + ": undefined operand");
  if (x.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_to_string(x.shape()));
}

// Broadcast output shape with per-dimension operand strides (0 where broadcast).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa;
  std::vector<std::size_t> sb;

  // Calls f(out_offset, a_offset, b_offset) for each run of the last dimension.
  template <typename F>
  void for_each_row(F&& f) const {
    const std::size_t rank = out.size();
    const std::size_t len = rank ? out[rank - 1] : 1;
    const std::size_t total = shape_numel(out);
    if (len == 0 || total == 0) return;
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < total; o += len) {
      f(o, ia, ib);
      for (std::size_t d = rank - 1; d-- > 0;) {
        ++idx[d];
        ia += sa[d];
        ib += sb[d];
        if (idx[d] < out[d]) break;
        ia -= sa[d] * idx[d];
        ib -= sb[d] * idx[d];
        idx[d] = 0;
      }
    }
  }
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Broadcast plan;
  plan.out.assign(rank, 1);
  std::vector<std::size_t> ea(rank, 1), eb(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    if (i < a.size()) ea[rank - 1 - i] = a[a.size() - 1 - i];
    if (i < b.size()) eb[rank - 1 - i] = b[b.size() - 1 - i];
  }
  for (std::size_t d = 0; d < rank; ++d) {
    if (ea[d] != eb[d] && ea[d] != 1 && eb[d] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(a) + " with " +
                           shape_to_string(b));
    }
    plan.out[d] = std::max(ea[d], eb[d]);
  }
  plan.sa.assign(rank, 0);
  plan.sb.assign(rank, 0);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t d = rank; d-- > 0;) {
    plan.sa[d] = ea[d] == 1 ? 0 : acc_a;
    plan.sb[d] = eb[d] == 1 ? 0 : acc_b;
    acc_a *= ea[d];
    acc_b *= eb[d];
  }
  return plan;
}

enum class Binary { add, sub, mul };

template <Binary K, typename T>
T apply_binary(T x, T y) {
  if constexpr (K == Binary::add) return x + y;
  else if constexpr (K == Binary::sub) return x - y;
  else return x * y;
}

template <Binary K, typename T>
Tensor<T> binary_impl(const Tensor<T>& a, const Tensor<T>& b, const char* name) {
  const auto& av = a.value();
  const auto& bv = b.value();

  if (av.shape() == bv.shape()) {
    NDArray<T> out(av.shape());
    const T* x = av.ptr();
    const T* y = bv.ptr();
    T* o = out.ptr();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = apply_binary<K>(x[i], y[i]);
    return record<T>(std::move(out), {a, b}, name, [](detail::Node<T>& n) {
      const T* g = n.grad.ptr();
      const std::size_t size = n.grad.numel();
      if (auto* ga = input_grad(n, 0)) {
        T* d = ga->ptr();
        if constexpr (K == Binary::mul) {
          const T* y = n.inputs[1]->value.ptr();
          for (std::size_t i = 0; i < size; ++i) d[i] += g[i] * y[i];
        } else {
          for (std::size_t i = 0; i < size; ++i) d[i] += g[i];
        }
      }
      if (auto* gb = input_grad(n, 1)) {
        T* d = gb->ptr();
        if constexpr (K == Binary::mul) {
          const T* x = n.inputs[0]->value.ptr();
          for (std::size_t i = 0; i < size; ++i) d[i] += g[i] * x[i];
        } else if constexpr (K == Binary::sub) {
          for (std::size_t i = 0; i < size; ++i) d[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < size; ++i) d[i] += g[i];
        }
      }
    });
  }

  auto plan = std::make_shared<Broadcast>(plan_broadcast(av.shape(), bv.shape(), name));
  NDArray<T> out(plan->out);
  const std::size_t last = plan->out.empty() ? 0 : plan->out.size() - 1;
  const std::size_t len = plan->out.empty() ? 1 : plan->out[last];
  const std::size_t sal = plan->out.empty() ? 0 : plan->sa[last];
  const std::size_t sbl = plan->out.empty() ? 0 : plan->sb[last];
  {
    const T* x = av.ptr();
    const T* y = bv.ptr();
    T* o = out.ptr();
    plan->for_each_row([&](std::size_t oo, std::size_t ia, std::size_t ib) {
      for (std::size_t j = 0; j < len; ++j) o[oo + j] = apply_binary<K>(x[ia + j * sal], y[ib + j * sbl]);
    });
  }
  return record<T>(std::move(out), {a, b}, name, [plan, len, sal, sbl](detail::Node<T>& n) {
    const T* g = n.grad.ptr();
    const T* x = n.inputs[0]->value.ptr();
    const T* y = n.inputs[1]->value.ptr();
    if (auto* ga = input_grad(n, 0)) {
      T* d = ga->ptr();
      plan->for_each_row([&](std::size_t oo, std::size_t ia, std::size_t ib) {
        for (std::size_t j = 0; j < len; ++j) {
          if constexpr (K == Binary::mul) d[ia + j * sal] += g[oo + j] * y[ib + j * sbl];
          else d[ia + j * sal] += g[oo + j];
        }
      });
    }
    if (auto* gb = input_grad(n, 1)) {
      T* d = gb->ptr();
      plan->for_each_row([&](std::size_t oo, std::size_t ia, std::size_t ib) {
        for (std::size_t j = 0; j < len; ++j) {
          if constexpr (K == Binary::mul) d[ib + j * sbl] += g[oo + j] * x[ia + j * sal];
          else if constexpr (K == Binary::sub) d[ib + j * sbl] -= g[oo + j];
          else d[ib + j * sbl] += g[oo + j];
        }
      });
    }
  });
}

template <typename T>
Tensor<T> binary(Binary kind, const Tensor<T>& a, const Tensor<T>& b, const char* name) {
  if (!a.defined() || !b.defined()) throw UsageError(std::string(name) + ": undefined operand");
  switch (kind) {
    case Binary::add: return binary_impl<Binary::add>(a, b, name);
    case Binary::sub: return binary_impl<Binary::sub>(a, b, name);
    default: return binary_impl<Binary::mul>(a, b, name);
  }
}

// Views a tensor as [outer, axis, inner] around `axis`.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                         shape_to_string(shape));
  }
  AxisView v;
  for (std::size_t d = 0; d < axis; ++d) v.outer *= shape[d];
  v.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) v.inner *= shape[d];
  return v;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  NDArray<T> out(Shape{m, n});
  gemm_nn(a.value().ptr(), b.value().ptr(), out.ptr(), m, k, n);
  return record<T>(std::move(out), {a, b}, "matmul", [m, k, n](detail::Node<T>& node) {
    const T* g = node.grad.ptr();
    if (auto* ga = input_grad(node, 0)) gemm_nt(g, node.inputs[1]->value.ptr(), ga->ptr(), m, n, k);
    if (auto* gb = input_grad(node, 1)) gemm_tn(node.inputs[0]->value.ptr(), g, gb->ptr(), m, k, n);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  NDArray<T> out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
  return record<T>(std::move(out), {a}, "transpose", [r, c](detail::Node<T>& node) {
    if (auto* ga = input_grad(node, 0)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga->at(i, j) += node.grad.at(j, i);
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t n = x.rows(), in = x.cols(), out_dim = w.cols();
  if (w.rows() != in) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + " does not match weight " +
                         shape_to_string(w.shape()));
  }
  const bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + shape_to_string(b.shape()) + " does not match weight " +
                         shape_to_string(w.shape()));
  }
  NDArray<T> out(Shape{n, out_dim});
  if (has_bias) {
    for (std::size_t i = 0; i < n; ++i) std::copy_n(b.value().ptr(), out_dim, out.ptr() + i * out_dim);
  }
  gemm_nn(x.value().ptr(), w.value().ptr(), out.ptr(), n, in, out_dim);
  auto backward = [n, in, out_dim, has_bias](detail::Node<T>& node) {
    const T* g = node.grad.ptr();
    if (auto* gx = input_grad(node, 0)) gemm_nt(g, node.inputs[1]->value.ptr(), gx->ptr(), n, out_dim, in);
    if (auto* gw = input_grad(node, 1)) gemm_tn(node.inputs[0]->value.ptr(), g, gw->ptr(), n, in, out_dim);
    if (has_bias) {
      if (auto* gb = input_grad(node, 2)) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < out_dim; ++j) (*gb)[j] += g[i * out_dim + j];
      }
    }
  };
  if (has_bias) return record<T>(std::move(out), {x, w, b}, "linear", backward);
  return record<T>(std::move(out), {x, w}, "linear", backward);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Binary::add, a, b, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Binary::sub, a, b, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Binary::mul, a, b, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  NDArray<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  return record<T>(std::move(out), {a}, "scale", [factor](detail::Node<T>& node) {
    if (auto* ga = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.numel(); ++i) (*ga)[i] += node.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  NDArray<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
  return record<T>(std::move(out), {a}, "relu", [](detail::Node<T>& node) {
    if (auto* ga = input_grad(node, 0)) {
      const auto& x = node.inputs[0]->value;
      for (std::size_t i = 0; i < node.grad.numel(); ++i) {
        if (x[i] > T(0)) (*ga)[i] += node.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  NDArray<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T x = a.value()[i];
    // Split on sign so exp never overflows.
    if (x >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T(1) + e);
    }
  }
  return record<T>(std::move(out), {a}, "sigmoid", [](detail::Node<T>& node) {
    if (auto* ga = input_grad(node, 0)) {
      const auto& y = node.value;
      for (std::size_t i = 0; i < node.grad.numel(); ++i) (*ga)[i] += node.grad[i] * y[i] * (T(1) - y[i]);
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis, "softmax");
  NDArray<T> out(x.shape());
  const auto& in = x.value();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t r = 0; r < v.inner; ++r) {
      const std::size_t base = o * v.extent * v.inner + r;
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t e = 0; e < v.extent; ++e) peak = std::max(peak, in[base + e * v.inner]);
      T total = T(0);
      for (std::size_t e = 0; e < v.extent; ++e) {
        const T y = std::exp(in[base + e * v.inner] - peak);
        out[base + e * v.inner] = y;
        total += y;
      }
      for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] /= total;
    }
  }
  return record<T>(std::move(out), {x}, "softmax", [v](detail::Node<T>& node) {
    auto* gx = input_grad(node, 0);
    if (!gx) return;
    const auto& y = node.value;
    const auto& g = node.grad;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t r = 0; r < v.inner; ++r) {
        const std::size_t base = o * v.extent * v.inner + r;
        T dot = T(0);
        for (std::size_t e = 0; e < v.extent; ++e) dot += y[base + e * v.inner] * g[base + e * v.inner];
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          (*gx)[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, const std::vector<std::uint8_t>& allowed) {
  require_matrix(x, "masked_softmax");
  if (allowed.empty()) return softmax(x, 1);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (allowed.size() != rows * cols) {
    throw DimensionError("masked_softmax: mask holds " + std::to_string(allowed.size()) + " entries for scores " +
                         shape_to_string(x.shape()));
  }
  NDArray<T> out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t base = i * cols;
    T peak = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      if (allowed[base + j]) {
        peak = std::max(peak, in[base + j]);
        any = true;
      }
    }
    if (!any) throw DomainError("masked_softmax: row " + std::to_string(i) + " is fully masked");
    T total = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      if (allowed[base + j]) {
        const T y = std::exp(in[base + j] - peak);
        out[base + j] = y;
        total += y;
      }
    }
    for (std::size_t j = 0; j < cols; ++j) out[base + j] /= total;
  }
  return record<T>(std::move(out), {x}, "masked_softmax", [rows, cols](detail::Node<T>& node) {
    auto* gx = input_grad(node, 0);
    if (!gx) return;
    const auto& y = node.value;
    const auto& g = node.grad;
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t base = i * cols;
      T dot = T(0);
      for (std::size_t j = 0; j < cols; ++j) dot += y[base + j] * g[base + j];
      for (std::size_t j = 0; j < cols; ++j) (*gx)[base + j] += y[base + j] * (g[base + j] - dot);
    }
  });
}

template <typename T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis, "reduce");
  if (v.extent == 0) throw DomainError("reduce: empty reduction axis in shape " + shape_to_string(x.shape()));
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  NDArray<T> out(out_shape);
  const auto& in = x.value();
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (op == ReduceOp::max) argmax->resize(out.numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t r = 0; r < v.inner; ++r) {
      const std::size_t base = o * v.extent * v.inner + r;
      const std::size_t dst = o * v.inner + r;
      if (op == ReduceOp::max) {
        std::size_t best = 0;
        for (std::size_t e = 1; e < v.extent; ++e) {
          if (in[base + e * v.inner] > in[base + best * v.inner]) best = e;
        }
        (*argmax)[dst] = best;
        out[dst] = in[base + best * v.inner];
      } else {
        T total = T(0);
        for (std::size_t e = 0; e < v.extent; ++e) total += in[base + e * v.inner];
        out[dst] = op == ReduceOp::mean ? total / static_cast<T>(v.extent) : total;
      }
    }
  }
  return record<T>(std::move(out), {x}, "reduce", [op, v, argmax](detail::Node<T>& node) {
    auto* gx = input_grad(node, 0);
    if (!gx) return;
    const auto& g = node.grad;
    const T weight = op == ReduceOp::mean ? T(1) / static_cast<T>(v.extent) : T(1);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t r = 0; r < v.inner; ++r) {
        const std::size_t base = o * v.extent * v.inner + r;
        const std::size_t src = o * v.inner + r;
        if (op == ReduceOp::max) {
          (*gx)[base + (*argmax)[src] * v.inner] += g[src];
        } else {
          for (std::size_t e = 0; e < v.extent; ++e) (*gx)[base + e * v.inner] += g[src] * weight;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.value().data()) total += v;
  return record<T>(NDArray<T>(Shape{}, std::vector<T>{total}), {x}, "sum_all", [](detail::Node<T>& node) {
    if (auto* gx = input_grad(node, 0)) {
      const T g = node.grad[0];
      for (auto& v : gx->data()) v += g;
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_matrix(x, "layer_norm");
  const std::size_t n = x.rows(), c = x.cols();
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layer_norm: affine parameters do not match width " + std::to_string(c));
  }
  NDArray<T> out(x.shape());
  auto xhat = std::make_shared<NDArray<T>>(x.shape());
  auto inv_std = std::make_shared<std::vector<T>>(n);
  const auto& in = x.value();
  const auto& gm = gamma.value();
  const auto& bt = beta.value();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = in.ptr() + i * c;
    T mu = T(0);
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (row[j] - mu) * is;
      xhat->at(i, j) = h;
      out.at(i, j) = h * gm[j] + bt[j];
    }
  }
  return record<T>(std::move(out), {x, gamma, beta}, "layer_norm", [n, c, xhat, inv_std](detail::Node<T>& node) {
    const auto& g = node.grad;
    const auto& gm = node.inputs[1]->value;
    if (auto* gg = input_grad(node, 1)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gg)[j] += g.at(i, j) * xhat->at(i, j);
    }
    if (auto* gb = input_grad(node, 2)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g.at(i, j);
    }
    if (auto* gx = input_grad(node, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        T mean_dh = T(0), mean_dh_h = T(0);
        for (std::size_t j = 0; j < c; ++j) {
          const T dh = g.at(i, j) * gm[j];
          mean_dh += dh;
          mean_dh_h += dh * xhat->at(i, j);
        }
        mean_dh /= static_cast<T>(c);
        mean_dh_h /= static_cast<T>(c);
        for (std::size_t j = 0; j < c; ++j) {
          const T dh = g.at(i, j) * gm[j];
          gx->at(i, j) += (*inv_std)[i] * (dh - mean_dh - xhat->at(i, j) * mean_dh_h);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& index) {
  require_matrix(x, "gather_rows");
  const std::size_t rows = x.rows(), c = x.cols();
  NDArray<T> out(Shape{index.size(), c});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw DomainError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                        std::to_string(rows) + " rows");
    }
    std::copy_n(x.value().ptr() + index[i] * c, c, out.ptr() + i * c);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index);
  return record<T>(std::move(out), {x}, "gather_rows", [idx, c](detail::Node<T>& node) {
    if (auto* gx = input_grad(node, 0)) {
      for (std::size_t i = 0; i < idx->size(); ++i) {
        T* dst = gx->ptr() + (*idx)[i] * c;
        const T* src = node.grad.ptr() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw UsageError("concat_rows: no parts");
  const std::size_t c = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != c) {
      throw DimensionError("concat_rows: width mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    rows += p.rows();
  }
  NDArray<T> out(Shape{rows, c});
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    std::copy_n(p.value().ptr(), p.numel(), out.ptr() + at * c);
    at += p.rows();
  }
  return record<T>(std::move(out), parts, "concat_rows", [offsets, c](detail::Node<T>& node) {
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (auto* gp = input_grad(node, k)) {
        const T* src = node.grad.ptr() + offsets[k] * c;
        for (std::size_t i = 0; i < gp->numel(); ++i) (*gp)[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no parts");
  const std::size_t rows = parts.front().rows();
  std::size_t width = 0;
  std::vector<std::size_t> offsets, widths;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    offsets.push_back(width);
    widths.push_back(p.cols());
    width += p.cols();
  }
  NDArray<T> out(Shape{rows, width});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(v.ptr() + i * widths[k], widths[k], out.ptr() + i * width + offsets[k]);
  }
  return record<T>(std::move(out), parts, "concat_cols", [rows, width, offsets, widths](detail::Node<T>& node) {
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (auto* gp = input_grad(node, k)) {
        for (std::size_t i = 0; i < rows; ++i) {
          const T* src = node.grad.ptr() + i * width + offsets[k];
          T* dst = gp->ptr() + i * widths[k];
          for (std::size_t j = 0; j < widths[k]; ++j) dst[j] += src[j];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  if (begin > end || end > x.rows()) {
    throw DomainError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                      shape_to_string(x.shape()));
  }
  const std::size_t c = x.cols();
  NDArray<T> out(Shape{end - begin, c});
  std::copy_n(x.value().ptr() + begin * c, out.numel(), out.ptr());
  return record<T>(std::move(out), {x}, "slice_rows", [begin, c](detail::Node<T>& node) {
    if (auto* gx = input_grad(node, 0)) {
      T* dst = gx->ptr() + begin * c;
      for (std::size_t i = 0; i < node.grad.numel(); ++i) dst[i] += node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  if (begin > end || end > x.cols()) {
    throw DomainError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                      shape_to_string(x.shape()));
  }
  const std::size_t rows = x.rows(), c = x.cols(), w = end - begin;
  NDArray<T> out(Shape{rows, w});
  for (std::size_t i = 0; i < rows; ++i) std::copy_n(x.value().ptr() + i * c + begin, w, out.ptr() + i * w);
  return record<T>(std::move(out), {x}, "slice_cols", [rows, c, w, begin](detail::Node<T>& node) {
    if (auto* gx = input_grad(node, 0)) {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j) gx->at(i, begin + j) += node.grad[i * w + j];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  NDArray<T> out = x.value();
  out.reshape(std::move(shape));
  return record<T>(std::move(out), {x}, "reshape", [](detail::Node<T>& node) {
    if (auto* gx = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.numel(); ++i) (*gx)[i] += node.grad[i];
    }
  });
}

#define PROXYTR_INSTANTIATE_OPS(T)                                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> transpose(const Tensor<T>&);                                                       \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                                        \
  template Tensor<T> relu(const Tensor<T>&);                                                            \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                         \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                            \
  template Tensor<T> masked_softmax(const Tensor<T>&, const std::vector<std::uint8_t>&);                \
  template Tensor<T> reduce(ReduceOp, const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> sum_all(const Tensor<T>&);                                                         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);               \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);                    \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                        \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                        \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                            \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

PROXYTR_INSTANTIATE_OPS(float)
PROXYTR_INSTANTIATE_OPS(double)

#undef PROXYTR_INSTANTIATE_OPS

}  // namespace proxytr
