#pragma once

// Reverse-mode automatic differentiation over a linear tape.
//
// Every primitive evaluates eagerly, appends one node holding its output and
// a backward closure, and returns a Var handle. Tape::backward walks the
// nodes in reverse order, accumulating gradients; gradients reaching nodes
// created with Tape::param are added into the Parameter's grad field.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bp6/error.hpp"
#include "bp6/tensor.hpp"

namespace bp6::ad {

enum class Mode { train, eval };

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t) { return push(std::move(t), false, nullptr, {}); }
  /// Differentiable input whose gradient is read back with grad().
  Var leaf(Tensor t) { return push(std::move(t), true, nullptr, {}); }
  /// References the parameter's storage (no copy); its gradient accumulates
  /// straight into p.grad. `p` must outlive the tape and stay unmodified
  /// until backward() returns.
  Var param(Parameter& p) {
    Var v = push(Tensor{}, true, nullptr, {});
    nodes_[v.id].param = &p;
    return v;
  }

  /// Appends a primitive's output. The node requires grad iff any input does.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, inputs);
  }

  const Tensor& value(std::size_t id) const {
    const auto& n = nodes_.at(id);
    return n.param ? n.param->value : n.value;
  }
  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() with respect to `v` (zeros if unreached).
  Tensor grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    if (n.param) return n.param->grad;
    return n.grad.data.empty() ? Tensor(n.value.shape, 0.0) : n.grad;
  }

  /// Output gradient of node `id`, valid inside a backward closure.
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }

  /// Accumulator for an input's gradient, or nullptr when it needs none.
  Tensor* grad_sink(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.param) {
      auto& p = *n.param;
      if (p.grad.shape != p.value.shape) p.grad = Tensor(p.value.shape, 0.0);
      return &p.grad;
    }
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape, 0.0);
    return &n.grad;
  }

  void backward(Var loss) {
    if (consumed_) throw ContractError("tape already consumed by a backward pass");
    if (value(loss).size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " + to_string(value(loss).shape));
    }
    consumed_ = true;
    if (!nodes_.at(loss.id).requires_grad) return;
    grad_sink(loss.id)->data[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.data.empty() || !n.backward) continue;
      n.backward(*this, i);
      // Intermediate gradients are dead once propagated.
      n.grad = Tensor{};
    }
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn, std::span<const Var> inputs) {
    for (const Var& in : inputs) {
      if (in.tape != this) throw ContractError("primitive input belongs to a different tape");
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  // deque keeps references to earlier node values valid while recording.
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const { return tape->value(id); }

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

namespace detail {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<MatRM>;
using CMap = Eigen::Map<const MatRM>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

inline Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

inline void require(bool ok, const char* primitive, const std::string& what) {
  if (!ok) throw ShapeError(std::string(primitive) + ": " + what);
}

inline void same_shape(const Var& a, const Var& b, const char* primitive) {
  require(a.shape() == b.shape(), primitive,
          "operand shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
}

// (outer, n, inner) split around `axis`.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class F, class G>
Var unary(Var x, F forward, G derivative) {
  Tensor out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), std::array{x}, [xid, derivative](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_sink(xid);
    if (!gx) return;
    const auto& go = t.out_grad(self);
    const auto& xin = t.value(xid);
    const auto& y = t.value(self);
    for (std::size_t i = 0; i < go.size(); ++i) gx->data[i] += go[i] * derivative(xin[i], y[i]);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape->record(std::move(out), std::array{a, b}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const auto& go = t.out_grad(self);
    for (std::size_t id : {a, b})
      if (Tensor* g = t.grad_sink(id))
        for (std::size_t i = 0; i < go.size(); ++i) g->data[i] += go[i];
  });
}

inline Var sub(Var a, Var b) {
  detail::same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape->record(std::move(out), std::array{a, b}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const auto& go = t.out_grad(self);
    if (Tensor* g = t.grad_sink(a))
      for (std::size_t i = 0; i < go.size(); ++i) g->data[i] += go[i];
    if (Tensor* g = t.grad_sink(b))
      for (std::size_t i = 0; i < go.size(); ++i) g->data[i] -= go[i];
  });
}

inline Var mul(Var a, Var b) {
  detail::same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape->record(std::move(out), std::array{a, b}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const auto& go = t.out_grad(self);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (Tensor* g = t.grad_sink(a))
      for (std::size_t i = 0; i < go.size(); ++i) g->data[i] += go[i] * bv[i];
    if (Tensor* g = t.grad_sink(b))
      for (std::size_t i = 0; i < go.size(); ++i) g->data[i] += go[i] * av[i];
  });
}

inline Var div(Var a, Var b) {
  detail::same_shape(a, b, "div");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return a.tape->record(std::move(out), std::array{a, b}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const auto& go = t.out_grad(self);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (Tensor* g = t.grad_sink(a))
      for (std::size_t i = 0; i < go.size(); ++i) g->data[i] += go[i] / bv[i];
    if (Tensor* g = t.grad_sink(b))
      for (std::size_t i = 0; i < go.size(); ++i) g->data[i] -= go[i] * av[i] / (bv[i] * bv[i]);
  });
}

inline Var scale(Var x, double c) {
  return detail::unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Var add_scalar(Var x, double c) {
  return detail::unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Var relu(Var x) {
  return detail::unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var x) {
  return detail::unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(Var x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(Var x) {
  return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Var square(Var x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

/// Sum of every element, scalar result.
inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return x.tape->record(Tensor::scalar(s), std::array{x}, [xid = x.id](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const double go = t.out_grad(self)[0];
    for (double& v : g->data) v += go;
  });
}

inline Var mean(Var x) {
  detail::require(x.value().size() > 0, "mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

/// Sum along `axis`; the axis is removed from the shape.
inline Var sum(Var x, std::size_t axis) {
  const auto& s = x.shape();
  detail::require(axis < s.size(), "sum", "axis out of range for shape " + to_string(s));
  const auto sp = detail::split_axis(s, axis);
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape, 0.0);
  const auto& in = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += in[(o * sp.n + k) * sp.inner + i];
  return x.tape->record(std::move(out), std::array{x}, [xid = x.id, sp](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const auto& go = t.out_grad(self);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.n; ++k)
        for (std::size_t i = 0; i < sp.inner; ++i) g->data[(o * sp.n + k) * sp.inner + i] += go[o * sp.inner + i];
  });
}

/// Inner product along the last axis: [..., D] x [..., D] -> [...].
inline Var dot(Var a, Var b) {
  detail::same_shape(a, b, "dot");
  const auto& s = a.shape();
  detail::require(!s.empty(), "dot", "operands must have rank >= 1");
  const std::size_t d = s.back();
  const std::size_t rows = d == 0 ? 0 : a.value().size() / d;
  Shape out_shape(s.begin(), s.end() - 1);
  Tensor out(out_shape, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += a.value()[r * d + k] * b.value()[r * d + k];
    out[r] = acc;
  }
  return a.tape->record(std::move(out), std::array{a, b}, [a = a.id, b = b.id, d, rows](Tape& t, std::size_t self) {
    const auto& go = t.out_grad(self);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (Tensor* g = t.grad_sink(a))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < d; ++k) g->data[r * d + k] += go[r] * bv[r * d + k];
    if (Tensor* g = t.grad_sink(b))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < d; ++k) g->data[r * d + k] += go[r] * av[r * d + k];
  });
}

/// Euclidean norm along the last axis: [..., D] -> [...].
inline Var l2_norm(Var x) {
  const auto& s = x.shape();
  detail::require(!s.empty(), "l2_norm", "operand must have rank >= 1");
  const std::size_t d = s.back();
  const std::size_t rows = d == 0 ? 0 : x.value().size() / d;
  Tensor out(Shape(s.begin(), s.end() - 1), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += x.value()[r * d + k] * x.value()[r * d + k];
    out[r] = std::sqrt(acc);
  }
  return x.tape->record(std::move(out), std::array{x}, [xid = x.id, d, rows](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const auto& go = t.out_grad(self);
    const auto& y = t.value(self);
    const auto& xv = t.value(xid);
    for (std::size_t r = 0; r < rows; ++r) {
      if (y[r] == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) g->data[r * d + k] += go[r] * xv[r * d + k] / y[r];
    }
  });
}

/// Row-wise cosine similarity along the last axis. Rows where either norm is
/// below 1e-12 yield 0 with zero gradient; `degenerate` counts them.
inline Var cosine_similarity(Var a, Var b, std::size_t* degenerate = nullptr) {
  detail::same_shape(a, b, "cosine_similarity");
  const auto& s = a.shape();
  detail::require(!s.empty(), "cosine_similarity", "operands must have rank >= 1");
  const std::size_t d = s.back();
  const std::size_t rows = d == 0 ? 0 : a.value().size() / d;
  Tensor out(Shape(s.begin(), s.end() - 1), 0.0);
  std::vector<double> na(rows), nb(rows);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < d; ++k) {
      ab += av[r * d + k] * bv[r * d + k];
      aa += av[r * d + k] * av[r * d + k];
      bb += bv[r * d + k] * bv[r * d + k];
    }
    na[r] = std::sqrt(aa);
    nb[r] = std::sqrt(bb);
    if (na[r] < 1e-12 || nb[r] < 1e-12) {
      na[r] = nb[r] = 0.0;
      if (degenerate) ++*degenerate;
      continue;
    }
    out[r] = ab / (na[r] * nb[r]);
  }
  return a.tape->record(std::move(out), std::array{a, b},
                        [a = a.id, b = b.id, d, rows, na = std::move(na), nb = std::move(nb)](Tape& t, std::size_t self) {
                          const auto& go = t.out_grad(self);
                          const auto& y = t.value(self);
                          const auto& av = t.value(a);
                          const auto& bv = t.value(b);
                          Tensor* ga = t.grad_sink(a);
                          Tensor* gb = t.grad_sink(b);
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (na[r] == 0.0) continue;
                            const double inv = 1.0 / (na[r] * nb[r]);
                            for (std::size_t k = 0; k < d; ++k) {
                              const double x = av[r * d + k], z = bv[r * d + k];
                              if (ga) ga->data[r * d + k] += go[r] * (z * inv - y[r] * x / (na[r] * na[r]));
                              if (gb) gb->data[r * d + k] += go[r] * (x * inv - y[r] * z / (nb[r] * nb[r]));
                            }
                          }
                        });
}

/// Softmax along `axis`.
inline Var softmax(Var x, std::size_t axis) {
  const auto& s = x.shape();
  detail::require(axis < s.size(), "softmax", "axis out of range for shape " + to_string(s));
  const auto sp = detail::split_axis(s, axis);
  Tensor out(s);
  const auto& in = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * sp.n + k) * sp.inner + i; };
      double mx = -INFINITY;
      for (std::size_t k = 0; k < sp.n; ++k) mx = std::max(mx, in[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) z += (out[at(k)] = std::exp(in[at(k)] - mx));
      for (std::size_t k = 0; k < sp.n; ++k) out[at(k)] /= z;
    }
  }
  return x.tape->record(std::move(out), std::array{x}, [xid = x.id, sp](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const auto& go = t.out_grad(self);
    const auto& y = t.value(self);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        auto at = [&](std::size_t k) { return (o * sp.n + k) * sp.inner + i; };
        double dotp = 0.0;
        for (std::size_t k = 0; k < sp.n; ++k) dotp += go[at(k)] * y[at(k)];
        for (std::size_t k = 0; k < sp.n; ++k) g->data[at(k)] += y[at(k)] * (go[at(k)] - dotp);
      }
    }
  });
}

inline Var reshape(Var x, Shape shape) {
  detail::require(numel(shape) == x.value().size(), "reshape",
                  "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  Tensor out(std::move(shape), x.value().data);
  return x.tape->record(std::move(out), std::array{x}, [xid = x.id](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const auto& go = t.out_grad(self);
    for (std::size_t i = 0; i < go.size(); ++i) g->data[i] += go[i];
  });
}

/// [B, ...] -> [B, prod(...)].
inline Var flatten(Var x) {
  const auto& s = x.shape();
  detail::require(!s.empty(), "flatten", "operand must have a batch axis");
  return reshape(x, Shape{s[0], x.value().size() / std::max<std::size_t>(s[0], 1)});
}

inline Var concat(std::span<const Var> xs, std::size_t axis) {
  detail::require(!xs.empty(), "concat", "no operands");
  const Shape& first = xs.front().shape();
  detail::require(axis < first.size(), "concat", "axis out of range for shape " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& v : xs) {
    Shape a = v.shape(), b = first;
    detail::require(a.size() == b.size(), "concat", "rank mismatch " + to_string(a) + " vs " + to_string(b));
    a[axis] = b[axis] = 0;
    detail::require(a == b, "concat", "shape " + to_string(v.shape()) + " incompatible with " + to_string(first));
    out_shape[axis] += v.shape()[axis];
  }
  const auto sp = detail::split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> offsets, widths, ids;
  std::size_t offset = 0;
  for (const Var& v : xs) {
    const std::size_t w = v.shape()[axis];
    const auto& in = v.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(in.data.begin() + static_cast<std::ptrdiff_t>(o * w * sp.inner), w * sp.inner,
                  out.data.begin() + static_cast<std::ptrdiff_t>((o * sp.n + offset) * sp.inner));
    offsets.push_back(offset);
    widths.push_back(w);
    ids.push_back(v.id);
    offset += w;
  }
  return xs.front().tape->record(
      std::move(out), xs, [sp, offsets, widths, ids](Tape& t, std::size_t self) {
        const auto& go = t.out_grad(self);
        for (std::size_t j = 0; j < ids.size(); ++j) {
          Tensor* g = t.grad_sink(ids[j]);
          if (!g) continue;
          const std::size_t w = widths[j];
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t k = 0; k < w * sp.inner; ++k)
              g->data[o * w * sp.inner + k] += go[(o * sp.n + offsets[j]) * sp.inner + k];
        }
      });
}

/// Rows of a [N, D] tensor picked by index (repeats allowed).
inline Var gather_rows(Var x, std::vector<std::size_t> rows) {
  const auto& s = x.shape();
  detail::require(s.size() == 2, "gather_rows", "expected rank 2, got " + to_string(s));
  const std::size_t d = s[1];
  Tensor out(Shape{rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    detail::require(rows[r] < s[0], "gather_rows", "row index " + std::to_string(rows[r]) + " out of range");
    std::copy_n(x.value().data.begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return x.tape->record(std::move(out), std::array{x}, [xid = x.id, rows = std::move(rows), d](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const auto& go = t.out_grad(self);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t k = 0; k < d; ++k) g->data[rows[r] * d + k] += go[r * d + k];
  });
}

/// Column `j` of a [B, E] tensor, shape [B].
inline Var column(Var x, std::size_t j) {
  const auto& s = x.shape();
  detail::require(s.size() == 2 && j < s[1], "column", "bad column " + std::to_string(j) + " for " + to_string(s));
  const std::size_t rows = s[0], cols = s[1];
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) out[r] = x.value()[r * cols + j];
  return x.tape->record(std::move(out), std::array{x}, [xid = x.id, j, rows, cols](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const auto& go = t.out_grad(self);
    for (std::size_t r = 0; r < rows; ++r) g->data[r * cols + j] += go[r];
  });
}

/// out = x * s where s's shape is a leading prefix of x's shape, broadcast over
/// the remaining trailing axes (e.g. [B,C,L] * [B,C], or [B,2] * [B]).
inline Var broadcast_mul(Var x, Var s) {
  const auto& xs = x.shape();
  const auto& ss = s.shape();
  detail::require(ss.size() <= xs.size() && std::equal(ss.begin(), ss.end(), xs.begin()), "broadcast_mul",
                  "scale shape " + to_string(ss) + " is not a prefix of " + to_string(xs));
  const std::size_t groups = s.value().size();
  const std::size_t inner = groups == 0 ? 0 : x.value().size() / groups;
  Tensor out(xs);
  for (std::size_t gi = 0; gi < groups; ++gi)
    for (std::size_t k = 0; k < inner; ++k) out[gi * inner + k] = x.value()[gi * inner + k] * s.value()[gi];
  return x.tape->record(std::move(out), std::array{x, s}, [xid = x.id, sid = s.id, groups, inner](Tape& t, std::size_t self) {
    const auto& go = t.out_grad(self);
    const auto& xv = t.value(xid);
    const auto& sv = t.value(sid);
    if (Tensor* g = t.grad_sink(xid))
      for (std::size_t gi = 0; gi < groups; ++gi)
        for (std::size_t k = 0; k < inner; ++k) g->data[gi * inner + k] += go[gi * inner + k] * sv[gi];
    if (Tensor* g = t.grad_sink(sid))
      for (std::size_t gi = 0; gi < groups; ++gi) {
        double acc = 0.0;
        for (std::size_t k = 0; k < inner; ++k) acc += go[gi * inner + k] * xv[gi * inner + k];
        g->data[gi] += acc;
      }
  });
}

/// y = x W^T + b with x [B, I], W [O, I], b [O].
inline Var linear(Var x, Var w, Var b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  detail::require(xs.size() == 2 && ws.size() == 2, "linear",
                  "expected x [B,I] and W [O,I], got " + to_string(xs) + " and " + to_string(ws));
  detail::require(xs[1] == ws[1], "linear",
                  "input features " + std::to_string(xs[1]) + " != weight in_features " + std::to_string(ws[1]));
  detail::require(b.shape() == Shape{ws[0]}, "linear", "bias shape " + to_string(b.shape()) + " != [" +
                                                           std::to_string(ws[0]) + "]");
  using detail::ix;
  const std::size_t batch = xs[0], in = xs[1], outf = ws[0];
  Tensor out(Shape{batch, outf});
  {
    detail::CMap X(x.value().data.data(), ix(batch), ix(in));
    detail::CMap W(w.value().data.data(), ix(outf), ix(in));
    detail::CVecMap B(b.value().data.data(), ix(outf));
    detail::Map Y(out.data.data(), ix(batch), ix(outf));
    Y.noalias() = X * W.transpose();
    Y.rowwise() += B.transpose();
  }
  return x.tape->record(std::move(out), std::array{x, w, b},
                        [xid = x.id, wid = w.id, bid = b.id, batch, in, outf](Tape& t, std::size_t self) {
                          using detail::ix;
                          detail::CMap dY(t.out_grad(self).data.data(), ix(batch), ix(outf));
                          if (Tensor* g = t.grad_sink(xid)) {
                            detail::CMap W(t.value(wid).data.data(), ix(outf), ix(in));
                            detail::Map(g->data.data(), ix(batch), ix(in)).noalias() += dY * W;
                          }
                          if (Tensor* g = t.grad_sink(wid)) {
                            detail::CMap X(t.value(xid).data.data(), ix(batch), ix(in));
                            detail::Map(g->data.data(), ix(outf), ix(in)).noalias() += dY.transpose() * X;
                          }
                          if (Tensor* g = t.grad_sink(bid)) {
                            detail::VecMap(g->data.data(), ix(outf)) += dY.colwise().sum().transpose();
                          }
                        });
}

inline std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                        std::size_t dilation, std::size_t left_pad) {
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (length + left_pad < span) return 0;
  return (length + left_pad - span) / stride + 1;
}

inline std::size_t maxpool1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (length < kernel) return 0;
  return (length - kernel) / stride + 1;
}

namespace detail {

// cols[(c*k + j), t] = x[c, t*stride + j*dilation - left_pad], zero outside.
inline void im2col(const double* x, std::size_t channels, std::size_t length, std::size_t kernel,
                   std::size_t stride, std::size_t dilation, std::size_t left_pad, std::size_t out_len,
                   double* cols) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t j = 0; j < kernel; ++j) {
      double* row = cols + (c * kernel + j) * out_len;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j * dilation) - static_cast<std::ptrdiff_t>(left_pad);
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride) + shift;
        row[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(length)) ? x[c * length + static_cast<std::size_t>(src)] : 0.0;
      }
    }
  }
}

inline void col2im_add(const double* cols, std::size_t channels, std::size_t length, std::size_t kernel,
                       std::size_t stride, std::size_t dilation, std::size_t left_pad, std::size_t out_len,
                       double* dx) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t j = 0; j < kernel; ++j) {
      const double* row = cols + (c * kernel + j) * out_len;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j * dilation) - static_cast<std::ptrdiff_t>(left_pad);
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride) + shift;
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(length)) dx[c * length + static_cast<std::size_t>(src)] += row[t];
      }
    }
  }
}

}  // namespace detail

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t left_pad = 0;  // zero padding on the left only (causal)
};

/// x [B, Cin, L], W [Cout, Cin, k], b [Cout] -> [B, Cout, Lout].
inline Var conv1d(Var x, Var w, Var b, Conv1dOptions opt = {}) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  detail::require(xs.size() == 3 && ws.size() == 3, "conv1d",
                  "expected x [B,Cin,L] and W [Cout,Cin,k], got " + to_string(xs) + " and " + to_string(ws));
  detail::require(xs[1] == ws[1], "conv1d",
                  "input channels " + std::to_string(xs[1]) + " != weight in_channels " + std::to_string(ws[1]));
  detail::require(b.shape() == Shape{ws[0]}, "conv1d", "bias shape " + to_string(b.shape()) + " mismatch");
  detail::require(opt.stride >= 1 && opt.dilation >= 1, "conv1d", "stride and dilation must be >= 1");
  const std::size_t batch = xs[0], cin = xs[1], len = xs[2], cout = ws[0], k = ws[2];
  const std::size_t out_len = conv1d_output_length(len, k, opt.stride, opt.dilation, opt.left_pad);
  detail::require(out_len > 0, "conv1d", "input length " + std::to_string(len) + " too short for kernel " + std::to_string(k));

  using detail::ix;
  Tensor out(Shape{batch, cout, out_len});
  std::vector<double> cols(cin * k * out_len);
  detail::CMap W(w.value().data.data(), ix(cout), ix(cin * k));
  detail::CVecMap B(b.value().data.data(), ix(cout));
  for (std::size_t n = 0; n < batch; ++n) {
    detail::im2col(x.value().data.data() + n * cin * len, cin, len, k, opt.stride, opt.dilation, opt.left_pad,
                   out_len, cols.data());
    detail::Map Y(out.data.data() + n * cout * out_len, ix(cout), ix(out_len));
    Y.noalias() = W * detail::CMap(cols.data(), ix(cin * k), ix(out_len));
    Y.colwise() += B;
  }
  return x.tape->record(
      std::move(out), std::array{x, w, b},
      [xid = x.id, wid = w.id, bid = b.id, batch, cin, len, cout, k, out_len, opt](Tape& t, std::size_t self) {
        using detail::ix;
        Tensor* gx = t.grad_sink(xid);
        Tensor* gw = t.grad_sink(wid);
        Tensor* gb = t.grad_sink(bid);
        const auto& go = t.out_grad(self);
        detail::CMap W(t.value(wid).data.data(), ix(cout), ix(cin * k));
        std::vector<double> cols(cin * k * out_len);
        for (std::size_t n = 0; n < batch; ++n) {
          detail::CMap dY(go.data.data() + n * cout * out_len, ix(cout), ix(out_len));
          if (gw) {
            detail::im2col(t.value(xid).data.data() + n * cin * len, cin, len, k, opt.stride, opt.dilation,
                           opt.left_pad, out_len, cols.data());
            detail::Map(gw->data.data(), ix(cout), ix(cin * k)).noalias() +=
                dY * detail::CMap(cols.data(), ix(cin * k), ix(out_len)).transpose();
          }
          if (gb) detail::VecMap(gb->data.data(), ix(cout)) += dY.rowwise().sum();
          if (gx) {
            detail::Map(cols.data(), ix(cin * k), ix(out_len)).noalias() = W.transpose() * dY;
            detail::col2im_add(cols.data(), cin, len, k, opt.stride, opt.dilation, opt.left_pad, out_len,
                               gx->data.data() + n * cin * len);
          }
        }
      });
}

/// x [B, C, L] -> [B, C, floor((L - k)/stride) + 1]. Ties route to the first maximum.
inline Var maxpool1d(Var x, std::size_t kernel, std::size_t stride) {
  const auto& xs = x.shape();
  detail::require(xs.size() == 3, "maxpool1d", "expected [B,C,L], got " + to_string(xs));
  detail::require(kernel >= 1 && stride >= 1, "maxpool1d", "kernel and stride must be >= 1");
  const std::size_t rows = xs[0] * xs[1], len = xs[2];
  const std::size_t out_len = maxpool1d_output_length(len, kernel, stride);
  detail::require(out_len > 0, "maxpool1d", "input length " + std::to_string(len) + " shorter than kernel");
  Tensor out(Shape{xs[0], xs[1], out_len});
  std::vector<std::size_t> argmax(rows * out_len);
  const auto& in = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = r * len + t * stride;
      for (std::size_t j = 1; j < kernel; ++j) {
        const std::size_t idx = r * len + t * stride + j;
        if (in[idx] > in[best]) best = idx;
      }
      out[r * out_len + t] = in[best];
      argmax[r * out_len + t] = best;
    }
  }
  return x.tape->record(std::move(out), std::array{x}, [xid = x.id, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const auto& go = t.out_grad(self);
    for (std::size_t i = 0; i < argmax.size(); ++i) g->data[argmax[i]] += go[i];
  });
}

/// Mean over the time axis: [B, C, L] -> [B, C].
inline Var global_avg_pool(Var x) {
  const auto& xs = x.shape();
  detail::require(xs.size() == 3 && xs[2] > 0, "global_avg_pool", "expected [B,C,L], got " + to_string(xs));
  return scale(sum(x, 2), 1.0 / static_cast<double>(xs[2]));
}

struct BatchNormState {
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of [B, C] or [B, C, L]. Train mode normalizes
/// with the batch's biased variance and updates the running statistics with
/// the unbiased one; eval mode uses the running statistics.
inline Var batchnorm1d(Var x, Var gamma, Var beta, const BatchNormState& st, Mode mode) {
  const auto& xs = x.shape();
  detail::require(xs.size() == 2 || xs.size() == 3, "batchnorm1d", "expected [B,C] or [B,C,L], got " + to_string(xs));
  const std::size_t batch = xs[0], ch = xs[1], len = xs.size() == 3 ? xs[2] : 1;
  detail::require(gamma.shape() == Shape{ch} && beta.shape() == Shape{ch}, "batchnorm1d",
                  "affine parameters must have shape [" + std::to_string(ch) + "]");
  detail::require(st.running_mean && st.running_var && st.running_mean->size() == ch && st.running_var->size() == ch,
                  "batchnorm1d", "running statistics missing or mis-sized");
  const std::size_t count = batch * len;
  const auto& in = x.value();
  auto at = [&](std::size_t n, std::size_t c, std::size_t l) { return (n * ch + c) * len + l; };

  std::vector<double> mu(ch), inv_std(ch);
  if (mode == Mode::train) {
    detail::require(count > 1, "batchnorm1d", "train mode needs more than one value per channel");
    for (std::size_t c = 0; c < ch; ++c) {
      double m = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t l = 0; l < len; ++l) m += in[at(n, c, l)];
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t l = 0; l < len; ++l) v += (in[at(n, c, l)] - m) * (in[at(n, c, l)] - m);
      const double biased = v / static_cast<double>(count);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(biased + st.eps);
      auto& rm = *st.running_mean;
      auto& rv = *st.running_var;
      rm[c] = (1.0 - st.momentum) * rm[c] + st.momentum * m;
      rv[c] = (1.0 - st.momentum) * rv[c] + st.momentum * v / static_cast<double>(count - 1);
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = (*st.running_mean)[c];
      inv_std[c] = 1.0 / std::sqrt((*st.running_var)[c] + st.eps);
    }
  }

  Tensor xhat(xs), out(xs);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = at(n, c, l);
        xhat[i] = (in[i] - mu[c]) * inv_std[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }

  return x.tape->record(
      std::move(out), std::array{x, gamma, beta},
      [xid = x.id, gid = gamma.id, bid = beta.id, batch, ch, len, count, mode, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](Tape& t, std::size_t self) {
        const auto& go = t.out_grad(self);
        const auto& gv = t.value(gid);
        auto at = [&](std::size_t n, std::size_t c, std::size_t l) { return (n * ch + c) * len + l; };
        Tensor* gx = t.grad_sink(xid);
        Tensor* gg = t.grad_sink(gid);
        Tensor* gb = t.grad_sink(bid);
        for (std::size_t c = 0; c < ch; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t i = at(n, c, l);
              sum_dy += go[i];
              sum_dy_xhat += go[i] * xhat[i];
            }
          if (gg) gg->data[c] += sum_dy_xhat;
          if (gb) gb->data[c] += sum_dy;
          if (!gx) continue;
          const double k = gv[c] * inv_std[c];
          if (mode == Mode::train) {
            const double inv_n = 1.0 / static_cast<double>(count);
            for (std::size_t n = 0; n < batch; ++n)
              for (std::size_t l = 0; l < len; ++l) {
                const std::size_t i = at(n, c, l);
                gx->data[i] += k * (go[i] - inv_n * sum_dy - xhat[i] * inv_n * sum_dy_xhat);
              }
          } else {
            for (std::size_t n = 0; n < batch; ++n)
              for (std::size_t l = 0; l < len; ++l) gx->data[at(n, c, l)] += k * go[at(n, c, l)];
          }
        }
      });
}

/// Inverted dropout: in train mode zeroes each element with probability p and
/// scales survivors by 1/(1-p); identity in eval mode.
inline Var dropout(Var x, double p, Mode mode, std::mt19937_64& rng) {
  detail::require(p >= 0.0 && p < 1.0, "dropout", "p must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = keep(rng) ? s : 0.0;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * mask[i];
  return x.tape->record(std::move(out), std::array{x}, [xid = x.id, mask = std::move(mask)](Tape& t, std::size_t self) {
    Tensor* g = t.grad_sink(xid);
    if (!g) return;
    const auto& go = t.out_grad(self);
    for (std::size_t i = 0; i < go.size(); ++i) g->data[i] += go[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<parameter>[index]" of the worst coordinate
};

/// Compares reverse-mode gradients of `build` (a deterministic scalar loss
/// built on a fresh tape from the current parameter values) against central
/// differences with h = 1e-5 * max(1, |theta|). `samples` coordinates are drawn
/// uniformly over all parameter entries; 0 means check every coordinate.
template <class Build>
GradCheckResult grad_check(Build&& build, std::span<Parameter* const> params, std::size_t samples = 0,
                           std::uint64_t seed = 0) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape;
    return build(tape).value().item();
  };

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (Parameter* p : params) total += p->value.size();
  if (samples == 0 || samples >= total) {
    for (std::size_t pi = 0; pi < params.size(); ++pi)
      for (std::size_t k = 0; k < params[pi]->value.size(); ++k) coords.emplace_back(pi, k);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t s = 0; s < samples; ++s) {
      std::size_t flat = pick(rng), pi = 0;
      while (flat >= params[pi]->value.size()) flat -= params[pi++]->value.size();
      coords.emplace_back(pi, flat);
    }
  }

  GradCheckResult result;
  for (auto [pi, k] : coords) {
    Parameter& p = *params[pi];
    const double theta = p.value[k];
    const double h = 1e-5 * std::max(1.0, std::abs(theta));
    p.value[k] = theta + h;
    const double up = evaluate();
    p.value[k] = theta - h;
    const double down = evaluate();
    p.value[k] = theta;
    const double fd = (up - down) / (2.0 * h);
    const double ad = p.grad[k];
    const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8});
    if (rel > result.max_rel_error || result.worst.empty()) {
      result.max_rel_error = rel;
      result.worst = p.name + "[" + std::to_string(k) + "]";
    }
    ++result.coordinates;
  }
  return result;
}

}  // namespace bp6::ad
