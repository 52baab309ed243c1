#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bp6/error.hpp"

namespace bp6::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool empty() const { return data.empty() && shape.empty(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double item() const {
    if (data.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape));
    return data[0];
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

/// Learnable tensor with a stable checkpoint name.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  std::string init;  // initializer tag, informational

  Parameter() = default;
  Parameter(std::string n, Tensor v, std::string init_tag = {})
      : name(std::move(n)), value(std::move(v)), grad(value.shape, 0.0), init(std::move(init_tag)) {}

  void zero_grad() {
    if (grad.shape != value.shape) grad = Tensor(value.shape, 0.0);
    grad.fill(0.0);
  }
};

/// Non-learned persistent state (batch-norm running statistics and the like).
struct Buffer {
  std::string name;
  Tensor* tensor = nullptr;
};

}  // namespace bp6::ad
