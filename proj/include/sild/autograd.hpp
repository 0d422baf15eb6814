#pragma once

// Minimal reverse-mode differentiation over dense real tensors.
//
// A Tape records primitive applications in execution order, so reverse
// iteration is already a topological order and backward() visits every node
// once. Values are row-major; a scalar has shape {}. Complex quantities are
// carried as separate real/imaginary tensors and composed from the real
// primitives below.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sild/errors.hpp"

namespace sild::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                       ad::to_string(shape));
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  std::size_t size() const noexcept { return data.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T item() const {
    if (data.size() != 1) throw ShapeError("item() on tensor of shape " + ad::to_string(shape));
    return data[0];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <typename T>
class Tape;

// Handle to a node on a tape; cheap to copy.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape; }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  T item() const { return value().item(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const std::vector<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> variable(Tensor<T> value) { return push(std::move(value), true, nullptr); }
  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  // Registers an op output; `backward` receives the output gradient and must
  // accumulate into its inputs through grad_buffer(). Skipped entirely when no
  // input requires a gradient.
  Var<T> record(Tensor<T> value, bool requires_grad, Backward backward) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Zero-initialized on first use.
  std::vector<T>& grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  // Gradient of the last backward() root w.r.t. `v`; zeros if unreached.
  Tensor<T> grad(const Var<T>& v) const {
    const auto& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor<T>(n.value.shape);
    return Tensor<T>(n.value.shape, n.grad);
  }

  void backward(const Var<T>& root) {
    if (&root.tape() != this) throw ShapeError("backward: variable belongs to another tape");
    if (root.size() != 1) throw ShapeError("backward: root must be scalar, got shape " + to_string(root.shape()));
    for (auto& n : nodes_) n.grad.clear();
    if (!nodes_[root.id()].requires_grad) return;
    grad_buffer(root.id())[0] = T(1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(backward)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ShapeError(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// For every flat index of `out`, the flat index of the broadcast operand.
// Empty result means the shapes are identical (identity map).
inline std::vector<std::size_t> broadcast_map(const Shape& out, const Shape& in) {
  if (out == in) return {};
  const std::size_t rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = rank; i-- > 0;) {
    const std::size_t k = in.size() + i >= rank ? i - (rank - in.size()) : std::size_t(-1);
    const std::size_t d = k == std::size_t(-1) ? 1 : in[k];
    stride[i] = d == 1 ? 0 : s;
    s *= d;
  }
  const std::size_t total = numel(out);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t pos = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    map[flat] = pos;
    for (std::size_t i = rank; i-- > 0;) {
      ++idx[i];
      pos += stride[i];
      if (idx[i] < out[i]) break;
      pos -= stride[i] * idx[i];
      idx[i] = 0;
    }
  }
  return map;
}

inline std::size_t at(const std::vector<std::size_t>& map, std::size_t i) { return map.empty() ? i : map[i]; }

// Elementwise binary op with broadcasting. da/db map (a, b, out) to the local
// partial derivative.
template <typename T, class F, class DA, class DB>
Var<T> binary(const char* op, const Var<T>& a, const Var<T>& b, F f, DA da, DB db) {
  auto& tape = same_tape(a, b, op);
  const auto& av = a.value();
  const auto& bv = b.value();
  Shape shape = broadcast_shape(av.shape, bv.shape, op);
  auto ma = broadcast_map(shape, av.shape);
  auto mb = broadcast_map(shape, bv.shape);
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[at(ma, i)], bv[at(mb, i)]);
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t ia = a.id(), ib = b.id();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg,
                     [ia, ib, self, ma = std::move(ma), mb = std::move(mb), da, db](Tape<T>& tp, const std::vector<T>& g) {
                       const auto& A = tp.value(ia).data;
                       const auto& B = tp.value(ib).data;
                       const auto& O = tp.value(self).data;
                       if (tp.requires_grad(ia)) {
                         auto& ga = tp.grad_buffer(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const std::size_t x = at(ma, i), y = at(mb, i);
                           ga[x] += g[i] * da(A[x], B[y], O[i]);
                         }
                       }
                       if (tp.requires_grad(ib)) {
                         auto& gb = tp.grad_buffer(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const std::size_t x = at(ma, i), y = at(mb, i);
                           gb[y] += g[i] * db(A[x], B[y], O[i]);
                         }
                       }
                     });
}

// Elementwise unary op; d maps (x, y) to dy/dx.
template <typename T, class F, class D>
Var<T> unary(const Var<T>& a, F f, D d) {
  auto& tape = a.tape();
  const auto& av = a.value();
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  const std::size_t ia = a.id();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), a.requires_grad(), [ia, self, d](Tape<T>& tp, const std::vector<T>& g) {
    const auto& X = tp.value(ia).data;
    const auto& Y = tp.value(self).data;
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * d(X[i], Y[i]);
  });
}

struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

inline Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim)
    out[axis] = 1;
  else
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (broadcasting)

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T x, T y, T) { return -x / (y * y); });
}

// Quadrant-aware angle of (x, y); atan2(0, 0) := 0 with zero gradient.
template <typename T>
Var<T> atan2(const Var<T>& y, const Var<T>& x) {
  return detail::binary<T>(
      "atan2", y, x, [](T yy, T xx) { return (yy == T(0) && xx == T(0)) ? T(0) : std::atan2(yy, xx); },
      [](T yy, T xx, T) {
        const T r2 = xx * xx + yy * yy;
        return r2 == T(0) ? T(0) : xx / r2;
      },
      [](T yy, T xx, T) {
        const T r2 = xx * xx + yy * yy;
        return r2 == T(0) ? T(0) : -yy / r2;
      });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary

template <typename T>
Var<T> neg(const Var<T>& a) {
  return detail::unary(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}
template <typename T>
Var<T> operator-(const Var<T>& a) { return neg(a); }

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  return detail::unary(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  return detail::unary(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// Gradient at exactly 0 is taken as 0 (the one-sided limit is infinite).
template <typename T>
Var<T> sqrt(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return std::sqrt(x); }, [](T, T y) { return y == T(0) ? T(0) : T(0.5) / y; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> sin(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::sin(x); }, [](T x, T) { return std::cos(x); });
}

template <typename T>
Var<T> cos(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
}

template <typename T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(a, [](T x) { return sigmoid_value(x); }, [](T, T y) { return y * (T(1) - y); });
}

// log(1 + e^x) without overflow.
template <typename T>
Var<T> softplus(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return (x > T(0) ? x : T(0)) + std::log1p(std::exp(-std::abs(x))); },
      [](T x, T) { return sigmoid_value(x); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return detail::unary(
      a, [slope](T x) { return x > T(0) ? x : slope * x; }, [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

// Same value, no gradient flows back through it.
template <typename T>
Var<T> detach(const Var<T>& a) {
  return a.tape().constant(a.value());
}

// ---------------------------------------------------------------------------
// Linear algebra and shape manipulation

// (m x k) . (k x n)
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::same_tape(a, b, "matmul");
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
    throw ShapeError("matmul: incompatible shapes " + to_string(A.shape) + " and " + to_string(B.shape));
  const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out.data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A.data[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = B.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib, m, k, n](Tape<T>& tp, const std::vector<T>& g) {
                       const auto& Ad = tp.value(ia).data;
                       const auto& Bd = tp.value(ib).data;
                       if (tp.requires_grad(ia)) {
                         auto& ga = tp.grad_buffer(ia);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             T acc = T(0);
                             const T* grow = g.data() + i * n;
                             const T* brow = Bd.data() + p * n;
                             for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                             ga[i * k + p] += acc;
                           }
                       }
                       if (tp.requires_grad(ib)) {
                         auto& gb = tp.grad_buffer(ib);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const T aip = Ad[i * k + p];
                             if (aip == T(0)) continue;
                             const T* grow = g.data() + i * n;
                             T* gbrow = gb.data() + p * n;
                             for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                           }
                       }
                     });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  Tensor<T> out(std::move(shape), a.value().data);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape<T>& tp, const std::vector<T>& g) {
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// Swap the two leading axes: (A, B, rest...) -> (B, A, rest...).
template <typename T>
Var<T> swap_axes01(const Var<T>& a) {
  const auto& s = a.shape();
  if (s.size() < 2) throw ShapeError("swap_axes01: need rank >= 2, got " + to_string(s));
  const std::size_t A = s[0], B = s[1], inner = numel(s) / (A * B == 0 ? 1 : A * B);
  Shape os = s;
  std::swap(os[0], os[1]);
  Tensor<T> out(os);
  const auto& X = a.value().data;
  for (std::size_t i = 0; i < A; ++i)
    for (std::size_t j = 0; j < B; ++j)
      std::copy_n(X.data() + (i * B + j) * inner, inner, out.data.data() + (j * A + i) * inner);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, A, B, inner](Tape<T>& tp, const std::vector<T>& g) {
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < A; ++i)
      for (std::size_t j = 0; j < B; ++j)
        for (std::size_t r = 0; r < inner; ++r) ga[(i * B + j) * inner + r] += g[(j * A + i) * inner + r];
  });
}

// Concatenate along the last axis; all leading dims must agree.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  auto& tape = parts.front().tape();
  Shape lead = parts.front().shape();
  if (lead.empty()) throw ShapeError("concat: scalars have no last axis");
  lead.pop_back();
  std::vector<std::size_t> widths;
  bool rg = false;
  for (const auto& p : parts) {
    detail::same_tape(parts.front(), p, "concat");
    Shape s = p.shape();
    if (s.empty()) throw ShapeError("concat: scalars have no last axis");
    widths.push_back(s.back());
    s.pop_back();
    if (s != lead)
      throw ShapeError("concat: leading dims " + to_string(s) + " differ from " + to_string(lead));
    rg = rg || p.requires_grad();
  }
  const std::size_t rows = numel(lead);
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  Shape os = lead;
  os.push_back(total);
  Tensor<T> out(os);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& X = parts[p].value().data;
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(X.data() + r * widths[p], widths[p], out.data.data() + r * total + offset);
    offset += widths[p];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return tape.record(std::move(out), rg, [ids, widths, rows, total](Tape<T>& tp, const std::vector<T>& g) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (tp.requires_grad(ids[p])) {
        auto& gp = tp.grad_buffer(ids[p]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[p]; ++j) gp[r * widths[p] + j] += g[r * total + off + j];
      }
      off += widths[p];
    }
  });
}

// Elements [begin, end) along `axis`.
template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto v = detail::axis_view(a.shape(), axis, "slice");
  if (begin > end || end > v.len)
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for shape " +
                     to_string(a.shape()));
  Shape os = a.shape();
  os[axis] = end - begin;
  Tensor<T> out(os);
  const std::size_t w = end - begin;
  const auto& X = a.value().data;
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy_n(X.data() + (o * v.len + begin) * v.inner, w * v.inner, out.data.data() + o * w * v.inner);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, v, begin, w](Tape<T>& tp, const std::vector<T>& g) {
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t r = 0; r < w * v.inner; ++r) ga[(o * v.len + begin) * v.inner + r] += g[o * w * v.inner + r];
  });
}

// Rows (leading-axis slices) selected by index; repeats allowed.
template <typename T>
Var<T> gather_rows(const Var<T>& a, std::vector<std::size_t> index) {
  const auto& s = a.shape();
  if (s.empty()) throw ShapeError("gather_rows: scalar input");
  const std::size_t rows = s[0];
  const std::size_t width = rows == 0 ? 0 : a.size() / rows;
  for (auto i : index)
    if (i >= rows)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for shape " + to_string(s));
  Shape os = s;
  os[0] = index.size();
  Tensor<T> out(os);
  const auto& X = a.value().data;
  for (std::size_t r = 0; r < index.size(); ++r)
    std::copy_n(X.data() + index[r] * width, width, out.data.data() + r * width);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, width, index = std::move(index)](Tape<T>& tp, const std::vector<T>& g) {
                           auto& ga = tp.grad_buffer(ia);
                           for (std::size_t r = 0; r < index.size(); ++r)
                             for (std::size_t j = 0; j < width; ++j) ga[index[r] * width + j] += g[r * width + j];
                         });
}

// out[index[r]] += a[r] over leading-axis rows; output has `rows` rows.
template <typename T>
Var<T> scatter_add_rows(const Var<T>& a, std::vector<std::size_t> index, std::size_t rows) {
  const auto& s = a.shape();
  if (s.empty() || s[0] != index.size())
    throw ShapeError("scatter_add_rows: " + std::to_string(index.size()) + " indices for shape " + to_string(s));
  const std::size_t width = s[0] == 0 ? 0 : a.size() / s[0];
  for (auto i : index)
    if (i >= rows) throw ShapeError("scatter_add_rows: index " + std::to_string(i) + " >= " + std::to_string(rows));
  Shape os = s;
  os[0] = rows;
  Tensor<T> out(os);
  const auto& X = a.value().data;
  for (std::size_t r = 0; r < index.size(); ++r) {
    T* dst = out.data.data() + index[r] * width;
    const T* src = X.data() + r * width;
    for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, width, index = std::move(index)](Tape<T>& tp, const std::vector<T>& g) {
                           auto& ga = tp.grad_buffer(ia);
                           for (std::size_t r = 0; r < index.size(); ++r)
                             for (std::size_t j = 0; j < width; ++j) ga[r * width + j] += g[index[r] * width + j];
                         });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(const Var<T>& a, std::size_t axis, bool keepdim = false) {
  const auto v = detail::axis_view(a.shape(), axis, "sum");
  Tensor<T> out(detail::reduced_shape(a.shape(), axis, keepdim));
  const auto& X = a.value().data;
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < v.len; ++l)
      for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] += X[(o * v.len + l) * v.inner + i];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, v](Tape<T>& tp, const std::vector<T>& g) {
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t l = 0; l < v.len; ++l)
        for (std::size_t i = 0; i < v.inner; ++i) ga[(o * v.len + l) * v.inner + i] += g[o * v.inner + i];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a, std::size_t axis, bool keepdim = false) {
  const auto len = detail::axis_view(a.shape(), axis, "mean").len;
  return scale(sum(a, axis, keepdim), T(1) / static_cast<T>(len));
}

// Population variance (divides by the axis length).
template <typename T>
Var<T> variance(const Var<T>& a, std::size_t axis, bool keepdim = false) {
  const auto v = detail::axis_view(a.shape(), axis, "variance");
  if (v.len == 0) throw ShapeError("variance: empty axis");
  Tensor<T> out(detail::reduced_shape(a.shape(), axis, keepdim));
  std::vector<T> mu(v.outer * v.inner, T(0));
  const auto& X = a.value().data;
  const T inv = T(1) / static_cast<T>(v.len);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < v.len; ++l)
      for (std::size_t i = 0; i < v.inner; ++i) mu[o * v.inner + i] += X[(o * v.len + l) * v.inner + i];
  for (auto& m : mu) m *= inv;
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < v.len; ++l)
      for (std::size_t i = 0; i < v.inner; ++i) {
        const T d = X[(o * v.len + l) * v.inner + i] - mu[o * v.inner + i];
        out[o * v.inner + i] += d * d * inv;
      }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, v, inv, mu = std::move(mu)](Tape<T>& tp, const std::vector<T>& g) {
                           const auto& Xd = tp.value(ia).data;
                           auto& ga = tp.grad_buffer(ia);
                           for (std::size_t o = 0; o < v.outer; ++o)
                             for (std::size_t l = 0; l < v.len; ++l)
                               for (std::size_t i = 0; i < v.inner; ++i) {
                                 const std::size_t x = (o * v.len + l) * v.inner + i;
                                 ga[x] += g[o * v.inner + i] * T(2) * (Xd[x] - mu[o * v.inner + i]) * inv;
                               }
                         });
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  return sum(reshape(a, Shape{a.size()}), 0);
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return mean(reshape(a, Shape{a.size()}), 0);
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// f(tape, inputs) must return a scalar Var built only from `inputs` and
// constants. Compares the tape gradient against the fourth-order central
// difference: max over coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
// The step starts at eps. When the central differences at h and 2h disagree,
// a kink lies within the stencil and the step shrinks (at most three times).
// Kinks at the evaluation point itself are outside the contract.
template <typename T, class F>
GradCheckResult grad_check(F&& f, std::vector<Tensor<T>> inputs, T eps, double floor = 1e-8) {
  if (!(eps > T(0))) throw NumericError("grad_check: eps must be positive");
  auto evaluate = [&](const std::vector<Tensor<T>>& xs) {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    const T v = f(tape, std::span<const Var<T>>(vars)).item();
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  std::vector<Tensor<T>> analytic;
  {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    for (const auto& x : inputs) vars.push_back(tape.variable(x));
    auto out = f(tape, std::span<const Var<T>>(vars));
    if (!std::isfinite(static_cast<double>(out.item()))) throw NumericError("grad_check: non-finite function value");
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const T orig = inputs[k][i];
      auto at = [&](T step) {
        inputs[k][i] = orig + step;
        return static_cast<double>(evaluate(inputs));
      };
      double numeric = 0.0;
      T h = eps;
      for (int attempt = 0; attempt < 4; ++attempt, h /= T(10)) {
        const double f1 = at(h), fm1 = at(-h), f2 = at(2 * h), fm2 = at(-2 * h);
        const double hd = static_cast<double>(h);
        const double c1 = (f1 - fm1) / (2.0 * hd), c2 = (f2 - fm2) / (4.0 * hd);
        numeric = (8.0 * (f1 - fm1) - (f2 - fm2)) / (12.0 * hd);
        const double noise = 1e3 * std::numeric_limits<T>::epsilon() * (std::abs(f1) + 1.0) / hd;
        if (std::abs(c1 - c2) <= 1e-6 * std::max(std::abs(c1), std::abs(c2)) + noise) break;
      }
      inputs[k][i] = orig;
      const double a = static_cast<double>(analytic[k][i]);
      if (!std::isfinite(a) || !std::isfinite(numeric)) throw NumericError("grad_check: non-finite gradient");
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > res.max_rel_err || (k == 0 && i == 0)) {
        res.max_rel_err = std::max(res.max_rel_err, rel);
        if (rel >= res.max_rel_err) {
          res.worst_tensor = k;
          res.worst_index = i;
          res.analytic = a;
          res.numeric = numeric;
        }
      }
    }
  }
  return res;
}

template <typename T, class F>
double grad_check(F&& f, const Tensor<T>& x, T eps, double floor = 1e-8) {
  auto wrapped = [&](Tape<T>& tape, std::span<const Var<T>> xs) { return f(tape, xs[0]); };
  return grad_check<T>(wrapped, std::vector<Tensor<T>>{x}, eps, floor).max_rel_err;
}

}  // namespace sild::ad
