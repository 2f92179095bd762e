#include "tsan/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gemm.hpp"

namespace tsan {
namespace {

using detail::gemm;

template <typename T>
Tape<T>& tape_of(const Var<T>& a) {
  if (!a.valid()) throw ContractError("op applied to an unbound variable");
  return *a.tape();
}

template <typename T>
Tape<T>& tape_of(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = tape_of(a);
  if (b.tape() != &t) throw ContractError("op arguments live on different tapes");
  return t;
}

std::string shapes(const Shape& a, const Shape& b) { return to_string(a) + " and " + to_string(b); }

template <typename T>
void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  T* d = dst.raw();
  const T* s = src.raw();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shapes(av.shape(), bv.shape()));
  }
  const std::size_t M = av.dim(0), K = av.dim(1), N = bv.dim(1);
  BasicTensor<T> out({M, N});
  gemm(false, false, M, N, K, av.raw(), K, bv.raw(), N, out.raw(), N, false);
  const bool rg = a.requires_grad() || b.requires_grad();
  return t.record("matmul", std::move(out), rg, [a, b, M, N, K](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.requires_grad(a)) {
      gemm(false, true, M, K, N, g.raw(), N, b.value().raw(), N, tp.grad_slot(a).raw(), K, true);
    }
    if (tp.requires_grad(b)) {
      gemm(true, false, K, N, M, a.value().raw(), K, g.raw(), N, tp.grad_slot(b).raw(), N, true);
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  Tape<T>& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0)) {
    throw ShapeError("bmm: incompatible batches " + shapes(av.shape(), bv.shape()));
  }
  const std::size_t B = av.dim(0), M = av.dim(1), K = av.dim(2);
  const std::size_t N = transpose_b ? bv.dim(1) : bv.dim(2);
  const std::size_t bk = transpose_b ? bv.dim(2) : bv.dim(1);
  if (bk != K) throw ShapeError("bmm: inner dimensions differ for " + shapes(av.shape(), bv.shape()));
  BasicTensor<T> out({B, M, N});
  const std::size_t ldb = transpose_b ? K : N;
  for (std::size_t i = 0; i < B; ++i) {
    gemm(false, transpose_b, M, N, K, av.raw() + i * M * K, K, bv.raw() + i * K * N, ldb,
         out.raw() + i * M * N, N, false);
  }
  const bool rg = a.requires_grad() || b.requires_grad();
  return t.record("bmm", std::move(out), rg,
                  [a, b, B, M, N, K, transpose_b](Tape<T>& tp, const BasicTensor<T>& g) {
                    const T* ap = a.value().raw();
                    const T* bp = b.value().raw();
                    if (tp.requires_grad(a)) {
                      T* ga = tp.grad_slot(a).raw();
                      for (std::size_t i = 0; i < B; ++i) {
                        // ga = g . op(b)^T
                        gemm(false, !transpose_b, M, K, N, g.raw() + i * M * N, N, bp + i * K * N,
                             transpose_b ? K : N, ga + i * M * K, K, true);
                      }
                    }
                    if (tp.requires_grad(b)) {
                      T* gb = tp.grad_slot(b).raw();
                      for (std::size_t i = 0; i < B; ++i) {
                        if (!transpose_b) {
                          gemm(true, false, K, N, M, ap + i * M * K, K, g.raw() + i * M * N, N,
                               gb + i * K * N, N, true);
                        } else {
                          gemm(true, false, N, K, M, g.raw() + i * M * N, N, ap + i * M * K, K,
                               gb + i * K * N, K, true);
                        }
                      }
                    }
                  });
}

namespace {

template <typename T>
Var<T> linear_impl(const Var<T>& x, const Var<T>& weight, const Var<T>* bias) {
  Tape<T>& t = tape_of(x, weight);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  if (xv.rank() < 1 || wv.rank() != 2 || xv.shape().back() != wv.dim(0)) {
    throw ShapeError("linear: input " + to_string(xv.shape()) + " does not match weight " +
                     to_string(wv.shape()));
  }
  const std::size_t in = wv.dim(0), out_dim = wv.dim(1);
  const std::size_t rows = in == 0 ? 0 : xv.size() / in;
  Shape out_shape = xv.shape();
  out_shape.back() = out_dim;
  BasicTensor<T> out(out_shape);
  gemm(false, false, rows, out_dim, in, xv.raw(), in, wv.raw(), out_dim, out.raw(), out_dim, false);
  bool rg = x.requires_grad() || weight.requires_grad();
  Var<T> b;
  if (bias != nullptr) {
    b = *bias;
    if (b.tape() != &t) throw ContractError("op arguments live on different tapes");
    const auto& bv = b.value();
    if (bv.rank() != 1 || bv.dim(0) != out_dim) {
      throw ShapeError("linear: bias " + to_string(bv.shape()) + " does not match output width " +
                       std::to_string(out_dim));
    }
    T* o = out.raw();
    const T* bp = bv.raw();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out_dim; ++j) o[r * out_dim + j] += bp[j];
    }
    rg = rg || b.requires_grad();
  }
  return t.record("linear", std::move(out), rg,
                  [x, weight, b, rows, in, out_dim](Tape<T>& tp, const BasicTensor<T>& g) {
                    if (tp.requires_grad(x)) {
                      gemm(false, true, rows, in, out_dim, g.raw(), out_dim, weight.value().raw(),
                           out_dim, tp.grad_slot(x).raw(), in, true);
                    }
                    if (tp.requires_grad(weight)) {
                      gemm(true, false, in, out_dim, rows, x.value().raw(), in, g.raw(), out_dim,
                           tp.grad_slot(weight).raw(), out_dim, true);
                    }
                    if (b.valid() && tp.requires_grad(b)) {
                      T* gb = tp.grad_slot(b).raw();
                      const T* gp = g.raw();
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += gp[r * out_dim + j];
                      }
                    }
                  });
}

}  // namespace

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight) {
  return linear_impl<T>(x, weight, nullptr);
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  return linear_impl<T>(x, weight, &bias);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!is_suffix(av.shape(), bv.shape())) {
    throw ShapeError("add: cannot broadcast " + shapes(av.shape(), bv.shape()));
  }
  const std::size_t inner = bv.size();
  const std::size_t outer = inner == 0 ? 0 : av.size() / inner;
  BasicTensor<T> out = av;
  T* o = out.raw();
  const T* bp = bv.raw();
  for (std::size_t r = 0; r < outer; ++r) {
    for (std::size_t j = 0; j < inner; ++j) o[r * inner + j] += bp[j];
  }
  const bool rg = a.requires_grad() || b.requires_grad();
  return t.record("add", std::move(out), rg, [a, b, outer, inner](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.requires_grad(a)) add_into(tp.grad_slot(a), g);
    if (tp.requires_grad(b)) {
      T* gb = tp.grad_slot(b).raw();
      const T* gp = g.raw();
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < inner; ++j) gb[j] += gp[r * inner + j];
      }
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) throw ShapeError("sub: shape mismatch " + shapes(av.shape(), bv.shape()));
  BasicTensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const bool rg = a.requires_grad() || b.requires_grad();
  return t.record("sub", std::move(out), rg, [a, b](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.requires_grad(a)) add_into(tp.grad_slot(a), g);
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_slot(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) throw ShapeError("mul: shape mismatch " + shapes(av.shape(), bv.shape()));
  BasicTensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const bool rg = a.requires_grad() || b.requires_grad();
  return t.record("mul", std::move(out), rg, [a, b](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad_slot(a);
      const auto& bv = b.value();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_slot(b);
      const auto& av = a.value();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tape<T>& t = tape_of(a);
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return t.record("scale", std::move(out), a.requires_grad(), [a, factor](Tape<T>& tp, const BasicTensor<T>& g) {
    auto& ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Tape<T>& t = tape_of(a);
  double acc = 0.0;
  for (T v : a.value().data()) acc += static_cast<double>(v);
  return t.record("sum", BasicTensor<T>::scalar(static_cast<T>(acc)), a.requires_grad(),
                  [a](Tape<T>& tp, const BasicTensor<T>& g) {
                    auto& ga = tp.grad_slot(a);
                    for (auto& v : ga.data()) v += g[0];
                  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  Tape<T>& t = tape_of(a);
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  for (T v : a.value().data()) acc += static_cast<double>(v);
  return t.record("mean", BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))),
                  a.requires_grad(), [a, n](Tape<T>& tp, const BasicTensor<T>& g) {
                    auto& ga = tp.grad_slot(a);
                    const T d = g[0] / static_cast<T>(n);
                    for (auto& v : ga.data()) v += d;
                  });
}

template <typename T>
Var<T> mean_axis(const Var<T>& a, std::size_t axis) {
  Tape<T>& t = tape_of(a);
  const Shape& s = a.value().shape();
  if (axis >= s.size() || s[axis] == 0) {
    throw ShapeError("mean_axis: axis " + std::to_string(axis) + " invalid for shape " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  BasicTensor<T> out(out_shape);
  const T* ap = a.value().raw();
  const T inv = T{1} / static_cast<T>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    T* dst = out.raw() + o * inner;
    for (std::size_t j = 0; j < n; ++j) {
      const T* src = ap + (o * n + j) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < inner; ++i) dst[i] *= inv;
  }
  return t.record("mean_axis", std::move(out), a.requires_grad(),
                  [a, outer, inner, n, inv](Tape<T>& tp, const BasicTensor<T>& g) {
                    T* ga = tp.grad_slot(a).raw();
                    for (std::size_t o = 0; o < outer; ++o) {
                      const T* src = g.raw() + o * inner;
                      for (std::size_t j = 0; j < n; ++j) {
                        T* dst = ga + (o * n + j) * inner;
                        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                      }
                    }
                  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tape<T>& t = tape_of(a);
  if (numel(shape) != a.value().size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.value().shape()) + " as " + to_string(shape));
  }
  return t.record("reshape", a.value().reshaped(std::move(shape)), a.requires_grad(),
                  [a](Tape<T>& tp, const BasicTensor<T>& g) { add_into(tp.grad_slot(a), g); });
}

template <typename T>
Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& axes) {
  Tape<T>& t = tape_of(a);
  const Shape& s = a.value().shape();
  const std::size_t r = s.size();
  std::vector<bool> seen(r, false);
  if (axes.size() != r) throw ShapeError("permute: axes do not match rank of " + to_string(s));
  for (std::size_t ax : axes) {
    if (ax >= r || seen[ax]) throw ShapeError("permute: invalid axis list for " + to_string(s));
    seen[ax] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape out_shape(r);
  for (std::size_t d = 0; d < r; ++d) out_shape[d] = s[axes[d]];
  const std::size_t n = a.value().size();
  std::vector<std::size_t> src_index(n);
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < r; ++d) off += counter[d] * in_stride[axes[d]];
    src_index[o] = off;
    for (std::size_t d = r; d-- > 0;) {
      if (++counter[d] < out_shape[d]) break;
      counter[d] = 0;
    }
  }
  BasicTensor<T> out(out_shape);
  const T* ap = a.value().raw();
  for (std::size_t o = 0; o < n; ++o) out[o] = ap[src_index[o]];
  return t.record("permute", std::move(out), a.requires_grad(),
                  [a, idx = std::move(src_index)](Tape<T>& tp, const BasicTensor<T>& g) {
                    T* ga = tp.grad_slot(a).raw();
                    for (std::size_t o = 0; o < idx.size(); ++o) ga[idx[o]] += g[o];
                  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape<T>& t = tape_of(parts.front());
  const Shape& first = parts.front().value().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw ContractError("op arguments live on different tapes");
    const Shape& s = p.value().shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch " + shapes(first, s));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) throw ShapeError("concat: shape mismatch " + shapes(first, s));
    }
    out_shape[axis] += s[axis];
    rg = rg || p.requires_grad();
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  BasicTensor<T> out(out_shape);
  const std::size_t out_chunk = out_shape[axis] * inner;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.value().dim(axis) * inner;
    const T* src = p.value().raw();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.raw() + o * out_chunk + offset);
    }
    offset += chunk;
  }
  return t.record("concat", std::move(out), rg,
                  [parts, axis, outer, inner, out_chunk](Tape<T>& tp, const BasicTensor<T>& g) {
                    std::size_t off = 0;
                    for (const auto& p : parts) {
                      const std::size_t chunk = p.value().dim(axis) * inner;
                      if (tp.requires_grad(p)) {
                        T* gp = tp.grad_slot(p).raw();
                        for (std::size_t o = 0; o < outer; ++o) {
                          const T* src = g.raw() + o * out_chunk + off;
                          for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += src[i];
                        }
                      }
                      off += chunk;
                    }
                  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tape<T>& t = tape_of(x);
  BasicTensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return t.record("relu", std::move(out), x.requires_grad(), [x](Tape<T>& tp, const BasicTensor<T>& g) {
    auto& gx = tp.grad_slot(x);
    const auto& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > T{0}) gx[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tape<T>& t = tape_of(x);
  BasicTensor<T> out = x.value();
  for (auto& v : out.data()) {
    v = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  }
  BasicTensor<T> y = out;
  return t.record("sigmoid", std::move(out), x.requires_grad(),
                  [x, y = std::move(y)](Tape<T>& tp, const BasicTensor<T>& g) {
                    auto& gx = tp.grad_slot(x);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (T{1} - y[i]);
                  });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  Tape<T>& t = tape_of(x);
  const auto& xv = x.value();
  if (xv.rank() == 0 || xv.shape().back() == 0) throw ShapeError("softmax: empty last axis");
  const std::size_t d = xv.shape().back();
  const std::size_t rows = xv.size() / d;
  BasicTensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = xv.raw() + r * d;
    T* dst = out.raw() + r * d;
    const T mx = *std::max_element(src, src + d);
    T total{0};
    for (std::size_t j = 0; j < d; ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (std::size_t j = 0; j < d; ++j) dst[j] /= total;
  }
  BasicTensor<T> y = out;
  return t.record("softmax", std::move(out), x.requires_grad(),
                  [x, y = std::move(y), rows, d](Tape<T>& tp, const BasicTensor<T>& g) {
                    T* gx = tp.grad_slot(x).raw();
                    for (std::size_t r = 0; r < rows; ++r) {
                      const T* yr = y.raw() + r * d;
                      const T* gr = g.raw() + r * d;
                      T dot{0};
                      for (std::size_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
                      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += yr[j] * (gr[j] - dot);
                    }
                  });
}

template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  Tape<T>& t = tape_of(x, gamma);
  if (beta.tape() != &t) throw ContractError("op arguments live on different tapes");
  const auto& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("layernorm: scalar input");
  const std::size_t d = xv.shape().back();
  if (gamma.value().shape() != Shape{d} || beta.value().shape() != Shape{d}) {
    throw ShapeError("layernorm: gamma/beta must have shape [" + std::to_string(d) + "]");
  }
  if (d == 1 && eps == T{0}) {
    throw ContractError("layernorm: width 1 with eps 0 divides by a zero variance");
  }
  const std::size_t rows = d == 0 ? 0 : xv.size() / d;
  BasicTensor<T> xhat(xv.shape());
  BasicTensor<T> inv_std({rows});
  BasicTensor<T> out(xv.shape());
  const T* gp = gamma.value().raw();
  const T* bp = beta.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = xv.raw() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += src[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (src[j] - mu) * (src[j] - mu);
    var /= static_cast<double>(d);
    const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = static_cast<T>(src[j] - mu) * is;
      xhat[r * d + j] = xh;
      out[r * d + j] = xh * gp[j] + bp[j];
    }
  }
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return t.record(
      "layernorm", std::move(out), rg,
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](
          Tape<T>& tp, const BasicTensor<T>& g) {
        const T* gmv = gamma.value().raw();
        if (tp.requires_grad(gamma)) {
          T* gg = tp.grad_slot(gamma).raw();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
          }
        }
        if (tp.requires_grad(beta)) {
          T* gb = tp.grad_slot(beta).raw();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
          }
        }
        if (tp.requires_grad(x)) {
          T* gx = tp.grad_slot(x).raw();
          const T n = static_cast<T>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T s1{0}, s2{0};
            for (std::size_t j = 0; j < d; ++j) {
              const T gh = g[r * d + j] * gmv[j];
              s1 += gh;
              s2 += gh * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const T gh = g[r * d + j] * gmv[j];
              gx[r * d + j] += inv_std[r] / n * (n * gh - s1 - xhat[r * d + j] * s2);
            }
          }
        }
      });
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  Tape<T>& t = tape_of(x, w);
  if (b.tape() != &t) throw ContractError("op arguments live on different tapes");
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.rank() != 2 && xv.rank() != 3) throw ShapeError("conv1d: input must be [L,c] or [B,L,c], got " + to_string(xv.shape()));
  if (wv.rank() != 3) throw ShapeError("conv1d: kernel must be [k,c_in,c_out], got " + to_string(wv.shape()));
  const bool batched = xv.rank() == 3;
  const std::size_t B = batched ? xv.dim(0) : 1;
  const std::size_t L = xv.dim(batched ? 1 : 0);
  const std::size_t cin = xv.shape().back();
  const std::size_t k = wv.dim(0), cout = wv.dim(2);
  if (wv.dim(1) != cin) throw ShapeError("conv1d: kernel " + to_string(wv.shape()) + " does not match input " + to_string(xv.shape()));
  if (b.value().shape() != Shape{cout}) throw ShapeError("conv1d: bias must have shape [" + std::to_string(cout) + "]");
  if (k == 0 || L < k) throw ShapeError("conv1d: input length " + std::to_string(L) + " shorter than kernel " + std::to_string(k));
  const std::size_t lout = L - k + 1;
  Shape out_shape = batched ? Shape{B, lout, cout} : Shape{lout, cout};
  BasicTensor<T> out(out_shape);
  const T* bp = b.value().raw();
  for (std::size_t bi = 0; bi < B; ++bi) {
    T* ob = out.raw() + bi * lout * cout;
    for (std::size_t i = 0; i < lout; ++i) std::copy(bp, bp + cout, ob + i * cout);
    // Window rows x[i..i+k-1] are contiguous, so patches are overlapping rows
    // of stride c_in over a [k*c_in] width.
    gemm(false, false, lout, cout, k * cin, xv.raw() + bi * L * cin, cin, wv.raw(), cout, ob, cout, true);
  }
  const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  return t.record("conv1d", std::move(out), rg,
                  [x, w, b, B, L, cin, k, cout, lout](Tape<T>& tp, const BasicTensor<T>& g) {
                    const T* xp = x.value().raw();
                    if (tp.requires_grad(w)) {
                      T* gw = tp.grad_slot(w).raw();
                      for (std::size_t bi = 0; bi < B; ++bi) {
                        gemm(true, false, k * cin, cout, lout, xp + bi * L * cin, cin,
                             g.raw() + bi * lout * cout, cout, gw, cout, true);
                      }
                    }
                    if (tp.requires_grad(b)) {
                      T* gb = tp.grad_slot(b).raw();
                      for (std::size_t r = 0; r < B * lout; ++r) {
                        for (std::size_t j = 0; j < cout; ++j) gb[j] += g[r * cout + j];
                      }
                    }
                    if (tp.requires_grad(x)) {
                      T* gx = tp.grad_slot(x).raw();
                      std::vector<T> patch(lout * k * cin);
                      for (std::size_t bi = 0; bi < B; ++bi) {
                        gemm(false, true, lout, k * cin, cout, g.raw() + bi * lout * cout, cout,
                             w.value().raw(), cout, patch.data(), k * cin, false);
                        T* gxb = gx + bi * L * cin;
                        for (std::size_t i = 0; i < lout; ++i) {
                          const T* pr = patch.data() + i * k * cin;
                          T* dst = gxb + i * cin;
                          for (std::size_t m = 0; m < k * cin; ++m) dst[m] += pr[m];
                        }
                      }
                    }
                  });
}

template <typename T>
Var<T> maxpool1d(const Var<T>& x, std::size_t window) {
  Tape<T>& t = tape_of(x);
  const auto& xv = x.value();
  if (window == 0) throw ConfigError("maxpool1d: window must be >= 1");
  if (xv.rank() != 2 && xv.rank() != 3) throw ShapeError("maxpool1d: input must be [L,c] or [B,L,c], got " + to_string(xv.shape()));
  const bool batched = xv.rank() == 3;
  const std::size_t B = batched ? xv.dim(0) : 1;
  const std::size_t L = xv.dim(batched ? 1 : 0);
  const std::size_t c = xv.shape().back();
  if (window > L) throw ShapeError("maxpool1d: window " + std::to_string(window) + " exceeds length " + std::to_string(L));
  const std::size_t lout = L / window;
  Shape out_shape = batched ? Shape{B, lout, c} : Shape{lout, c};
  BasicTensor<T> out(out_shape);
  std::vector<std::size_t> argmax(out.size());
  const T* xp = xv.raw();
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t i = 0; i < lout; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        std::size_t best = (bi * L + i * window) * c + j;
        for (std::size_t m = 1; m < window; ++m) {
          const std::size_t idx = (bi * L + i * window + m) * c + j;
          if (xp[idx] > xp[best]) best = idx;
        }
        const std::size_t o = (bi * lout + i) * c + j;
        out[o] = xp[best];
        argmax[o] = best;
      }
    }
  }
  return t.record("maxpool1d", std::move(out), x.requires_grad(),
                  [x, argmax = std::move(argmax)](Tape<T>& tp, const BasicTensor<T>& g) {
                    T* gx = tp.grad_slot(x).raw();
                    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
                  });
}

template <typename T>
Var<T> batchnorm1d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                   const BatchNormOptions& options) {
  Tape<T>& t = tape_of(x, gamma);
  if (beta.tape() != &t) throw ContractError("op arguments live on different tapes");
  const auto& xv = x.value();
  if (xv.rank() < 2) throw ShapeError("batchnorm1d: input needs a batch axis, got " + to_string(xv.shape()));
  const std::size_t c = xv.shape().back();
  if (gamma.value().shape() != Shape{c} || beta.value().shape() != Shape{c}) {
    throw ShapeError("batchnorm1d: gamma/beta must have shape [" + std::to_string(c) + "]");
  }
  const std::size_t m = c == 0 ? 0 : xv.size() / c;
  const bool train = options.mode == Mode::train;
  if (!train && (running_mean.size() != c || running_var.size() != c)) {
    throw ContractError("batchnorm1d: eval mode before running statistics were initialized");
  }
  if (train && (running_mean.size() != c || running_var.size() != c)) {
    running_mean = BasicTensor<T>::zeros({c});
    running_var = BasicTensor<T>::ones({c});
  }
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  if (train) {
    if (m == 0) throw ShapeError("batchnorm1d: empty batch in train mode");
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < c; ++j) mu[j] += xv[r * c + j];
    }
    for (auto& v : mu) v /= static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const double dlt = xv[r * c + j] - mu[j];
        var[j] += dlt * dlt;
      }
    }
    for (auto& v : var) v /= static_cast<double>(m);
    const double mom = options.momentum;
    for (std::size_t j = 0; j < c; ++j) {
      running_mean[j] = static_cast<T>((1.0 - mom) * running_mean[j] + mom * mu[j]);
      running_var[j] = static_cast<T>((1.0 - mom) * running_var[j] + mom * var[j]);
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = running_mean[j];
      var[j] = running_var[j];
    }
  }
  BasicTensor<T> inv_std({c});
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = static_cast<T>(1.0 / std::sqrt(var[j] + options.eps));
  BasicTensor<T> xhat(xv.shape());
  BasicTensor<T> out(xv.shape());
  const T* gp = gamma.value().raw();
  const T* bp = beta.value().raw();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = r * c + j;
      const T xh = static_cast<T>(xv[i] - mu[j]) * inv_std[j];
      xhat[i] = xh;
      out[i] = xh * gp[j] + bp[j];
    }
  }
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return t.record(
      "batchnorm1d", std::move(out), rg,
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), m, c, train](
          Tape<T>& tp, const BasicTensor<T>& g) {
        std::vector<T> sg(c, T{0}), sgx(c, T{0});
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            sg[j] += g[r * c + j];
            sgx[j] += g[r * c + j] * xhat[r * c + j];
          }
        }
        if (tp.requires_grad(gamma)) {
          T* gg = tp.grad_slot(gamma).raw();
          for (std::size_t j = 0; j < c; ++j) gg[j] += sgx[j];
        }
        if (tp.requires_grad(beta)) {
          T* gb = tp.grad_slot(beta).raw();
          for (std::size_t j = 0; j < c; ++j) gb[j] += sg[j];
        }
        if (tp.requires_grad(x)) {
          T* gx = tp.grad_slot(x).raw();
          const T* gmv = gamma.value().raw();
          const T n = static_cast<T>(m);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t i = r * c + j;
              if (train) {
                gx[i] += gmv[j] * inv_std[j] / n * (n * g[i] - sg[j] - xhat[i] * sgx[j]);
              } else {
                gx[i] += g[i] * gmv[j] * inv_std[j];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  Tape<T>& t = tape_of(x);
  const auto& xv = x.value();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  BasicTensor<T> mask(xv.shape());
  BasicTensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = u(rng) >= rate ? keep_scale : T{0};
    out[i] = xv[i] * mask[i];
  }
  return t.record("dropout", std::move(out), x.requires_grad(),
                  [x, mask = std::move(mask)](Tape<T>& tp, const BasicTensor<T>& g) {
                    auto& gx = tp.grad_slot(x);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
                  });
}

template <typename T>
Var<T> binary_cross_entropy(const Var<T>& prob, const BasicTensor<T>& target, T clip) {
  Tape<T>& t = tape_of(prob);
  const auto& pv = prob.value();
  if (pv.size() != target.size() || pv.size() == 0) {
    throw ContractError("binary_cross_entropy: prediction " + to_string(pv.shape()) +
                        " does not match target " + to_string(target.shape()));
  }
  const std::size_t n = pv.size();
  const T lo = clip, hi = T{1} - clip;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pv[i], lo, hi);
    const double y = target[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return t.record("binary_cross_entropy", BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))),
                  prob.requires_grad(), [prob, target, lo, hi, n](Tape<T>& tp, const BasicTensor<T>& g) {
                    auto& gp = tp.grad_slot(prob);
                    const auto& pv = prob.value();
                    const T s = g[0] / static_cast<T>(n);
                    for (std::size_t i = 0; i < n; ++i) {
                      const T p = pv[i];
                      if (p < lo || p > hi) continue;
                      const T y = target[i];
                      gp[i] += s * (-y / p + (T{1} - y) / (T{1} - p));
                    }
                  });
}

template <typename T>
Var<T> mean_squared_error(const Var<T>& pred, const BasicTensor<T>& target) {
  Tape<T>& t = tape_of(pred);
  const auto& pv = pred.value();
  if (pv.size() != target.size() || pv.size() == 0) {
    throw ContractError("mean_squared_error: prediction " + to_string(pv.shape()) +
                        " does not match target " + to_string(target.shape()));
  }
  const std::size_t n = pv.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pv[i]) - target[i];
    acc += d * d;
  }
  return t.record("mean_squared_error", BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))),
                  pred.requires_grad(), [pred, target, n](Tape<T>& tp, const BasicTensor<T>& g) {
                    auto& gp = tp.grad_slot(pred);
                    const auto& pv = pred.value();
                    const T s = T{2} * g[0] / static_cast<T>(n);
                    for (std::size_t i = 0; i < n; ++i) gp[i] += s * (pv[i] - target[i]);
                  });
}

template <typename T>
Var<T> categorical_cross_entropy(const Var<T>& prob, const BasicTensor<T>& target, T clip) {
  Tape<T>& t = tape_of(prob);
  const auto& pv = prob.value();
  if (pv.shape() != target.shape() || pv.rank() == 0 || pv.size() == 0) {
    throw ContractError("categorical_cross_entropy: prediction " + to_string(pv.shape()) +
                        " does not match target " + to_string(target.shape()));
  }
  const std::size_t k = pv.shape().back();
  const std::size_t rows = pv.size() / k;
  const T lo = clip, hi = T{1} - clip;
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (target[i] != T{0}) acc -= target[i] * std::log(static_cast<double>(std::clamp(pv[i], lo, hi)));
  }
  return t.record("categorical_cross_entropy",
                  BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(rows))),
                  prob.requires_grad(), [prob, target, lo, hi, rows](Tape<T>& tp, const BasicTensor<T>& g) {
                    auto& gp = tp.grad_slot(prob);
                    const auto& pv = prob.value();
                    const T s = g[0] / static_cast<T>(rows);
                    for (std::size_t i = 0; i < pv.size(); ++i) {
                      if (target[i] == T{0} || pv[i] < lo || pv[i] > hi) continue;
                      gp[i] -= s * target[i] / pv[i];
                    }
                  });
}

#define TSAN_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                         \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool);                                      \
  template Var<T> linear(const Var<T>&, const Var<T>&);                                         \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                            \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                            \
  template Var<T> scale(const Var<T>&, T);                                                      \
  template Var<T> sum(const Var<T>&);                                                           \
  template Var<T> mean(const Var<T>&);                                                          \
  template Var<T> mean_axis(const Var<T>&, std::size_t);                                        \
  template Var<T> reshape(const Var<T>&, Shape);                                                \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                      \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                              \
  template Var<T> relu(const Var<T>&);                                                          \
  template Var<T> sigmoid(const Var<T>&);                                                       \
  template Var<T> softmax(const Var<T>&);                                                       \
  template Var<T> layernorm(const Var<T>&, const Var<T>&, const Var<T>&, T);                    \
  template Var<T> conv1d(const Var<T>&, const Var<T>&, const Var<T>&);                          \
  template Var<T> maxpool1d(const Var<T>&, std::size_t);                                        \
  template Var<T> batchnorm1d(const Var<T>&, const Var<T>&, const Var<T>&, BasicTensor<T>&,     \
                              BasicTensor<T>&, const BatchNormOptions&);                        \
  template Var<T> dropout(const Var<T>&, double, Mode, std::mt19937_64&);                       \
  template Var<T> binary_cross_entropy(const Var<T>&, const BasicTensor<T>&, T);                \
  template Var<T> mean_squared_error(const Var<T>&, const BasicTensor<T>&);                     \
  template Var<T> categorical_cross_entropy(const Var<T>&, const BasicTensor<T>&, T);

TSAN_INSTANTIATE_OPS(float)
TSAN_INSTANTIATE_OPS(double)

#undef TSAN_INSTANTIATE_OPS

}  // namespace tsan
