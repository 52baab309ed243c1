#pragma once

// Layers with owned parameters, built on the autodiff primitives.
//
// Layers are pinned in memory (no copy or move) because tapes hold raw
// pointers to their Parameters during a forward/backward pass.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "bp6/autodiff.hpp"

namespace bp6::nn {

using ad::Buffer;
using ad::Mode;
using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

/// Per-pass settings. Dropout and batch-norm modes are independent so a
/// gradient check can freeze dropout while batch norm uses batch statistics.
struct Context {
  Tape& tape;
  Mode dropout_mode = Mode::eval;
  Mode bn_mode = Mode::eval;
  std::mt19937_64* rng = nullptr;

  static Context train(Tape& t, std::mt19937_64& rng) { return {t, Mode::train, Mode::train, &rng}; }
  static Context eval(Tape& t) { return {t, Mode::eval, Mode::eval, nullptr}; }
};

class Layer {
 public:
  Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;
  virtual ~Layer() = default;

  virtual void collect(std::vector<Parameter*>& out) = 0;
  virtual void collect_buffers(std::vector<Buffer>&) {}
};

/// uniform(-sqrt(6/fan_in), sqrt(6/fan_in))
inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

class Linear : public Layer {
 public:
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(name + ".weight", fan_in_uniform({out, in}, in, rng), "fan_in_uniform"),
        bias(name + ".bias", Tensor({out}, 0.0), "zeros") {}

  Var operator()(Context& ctx, Var x) { return ad::linear(x, ctx.tape.param(weight), ctx.tape.param(bias)); }

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  void collect(std::vector<Parameter*>& out) override {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter weight;
  Parameter bias;
};

class Conv1d : public Layer {
 public:
  Conv1d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, ad::Conv1dOptions opt,
         std::mt19937_64& rng)
      : weight(name + ".weight", fan_in_uniform({out, in, kernel}, in * kernel, rng), "fan_in_uniform"),
        bias(name + ".bias", Tensor({out}, 0.0), "zeros"),
        options(opt) {}

  Var operator()(Context& ctx, Var x) {
    return ad::conv1d(x, ctx.tape.param(weight), ctx.tape.param(bias), options);
  }

  std::size_t output_length(std::size_t length) const {
    return ad::conv1d_output_length(length, weight.value.dim(2), options.stride, options.dilation, options.left_pad);
  }

  void collect(std::vector<Parameter*>& out) override {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter weight;
  Parameter bias;
  ad::Conv1dOptions options;
};

class BatchNorm1d : public Layer {
 public:
  BatchNorm1d(const std::string& name, std::size_t channels)
      : gamma(name + ".gamma", Tensor({channels}, 1.0), "ones"),
        beta(name + ".beta", Tensor({channels}, 0.0), "zeros"),
        running_mean({channels}, 0.0),
        running_var({channels}, 1.0),
        name_(name) {}

  Var operator()(Context& ctx, Var x) {
    return ad::batchnorm1d(x, ctx.tape.param(gamma), ctx.tape.param(beta), {&running_mean, &running_var, 0.1, 1e-5},
                           ctx.bn_mode);
  }

  void collect(std::vector<Parameter*>& out) override {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void collect_buffers(std::vector<Buffer>& out) override {
    out.push_back({name_ + ".running_mean", &running_mean});
    out.push_back({name_ + ".running_var", &running_var});
  }

  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;

 private:
  std::string name_;
};

inline Var dropout(Context& ctx, Var x, double p) {
  if (ctx.dropout_mode == Mode::eval || p == 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("train-mode dropout needs a random generator");
  return ad::dropout(x, p, Mode::train, *ctx.rng);
}

/// Squeeze-and-excitation: gates = sigmoid(W2 relu(W1 avgpool(u))), output = u * gates.
class SeBlock : public Layer {
 public:
  static std::size_t hidden_width(std::size_t channels, std::size_t reduction) {
    return std::max<std::size_t>(1, channels / std::max<std::size_t>(reduction, 1));
  }

  SeBlock(const std::string& name, std::size_t channels, std::size_t reduction, std::mt19937_64& rng)
      : fc1(name + ".fc1", channels, hidden_width(channels, reduction), rng),
        fc2(name + ".fc2", hidden_width(channels, reduction), channels, rng) {}

  /// [B, C, L] -> [B, C] gates in (0, 1).
  Var gates(Context& ctx, Var u) { return ad::sigmoid(fc2(ctx, ad::relu(fc1(ctx, ad::global_avg_pool(u))))); }

  Var operator()(Context& ctx, Var u) { return ad::broadcast_mul(u, gates(ctx, u)); }

  void collect(std::vector<Parameter*>& out) override {
    fc1.collect(out);
    fc2.collect(out);
  }

  Linear fc1;
  Linear fc2;
};

}  // namespace bp6::nn
