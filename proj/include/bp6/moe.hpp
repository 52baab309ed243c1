#pragma once

// Feature fusion and the softmax-gated mixture-of-experts regression head.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bp6/nn.hpp"

namespace bp6::nn {

/// Concatenates per-modality embeddings [B, D_m] along features, in the given order.
inline Var fuse(std::span<const Var> embeddings, std::size_t embed_dim) {
  if (embeddings.empty()) throw ShapeError("fuse: no embeddings");
  for (const Var& e : embeddings) {
    const auto& s = e.shape();
    if (s.size() != 2 || s[1] != embed_dim) {
      throw ShapeError("fuse: embedding shape " + ad::to_string(s) + " is not [B," + std::to_string(embed_dim) + "]");
    }
  }
  return ad::concat(embeddings, 1);
}

/// Linear -> relu -> batch norm blocks, then a raw linear output layer.
class Expert : public Layer {
 public:
  Expert(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
         std::mt19937_64& rng) {
    std::size_t width = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      linears_.push_back(std::make_unique<Linear>(name + ".fc" + std::to_string(i), width, hidden[i], rng));
      bns_.push_back(std::make_unique<BatchNorm1d>(name + ".bn" + std::to_string(i), hidden[i]));
      width = hidden[i];
    }
    linears_.push_back(std::make_unique<Linear>(name + ".out", width, out, rng));
  }

  Var operator()(Context& ctx, Var x) {
    for (std::size_t i = 0; i < bns_.size(); ++i) x = (*bns_[i])(ctx, ad::relu((*linears_[i])(ctx, x)));
    return (*linears_.back())(ctx, x);
  }

  void collect(std::vector<Parameter*>& out) override {
    for (std::size_t i = 0; i < linears_.size(); ++i) {
      linears_[i]->collect(out);
      if (i < bns_.size()) bns_[i]->collect(out);
    }
  }
  void collect_buffers(std::vector<Buffer>& out) override {
    for (auto& bn : bns_) bn->collect_buffers(out);
  }

  Linear& output_layer() { return *linears_.back(); }

 private:
  std::vector<std::unique_ptr<Linear>> linears_;
  std::vector<std::unique_ptr<BatchNorm1d>> bns_;
};

/// y = sum_i g_i(f) E_i(f), g = softmax(W f + b). Every expert is evaluated.
class MoeHead : public Layer {
 public:
  MoeHead(std::size_t in, std::size_t num_experts, const std::vector<std::size_t>& hidden, std::size_t out,
          std::mt19937_64& rng)
      : gate("gate", in, num_experts, rng) {
    if (num_experts == 0) throw ConfigError("model.num_experts must be >= 1");
    for (std::size_t i = 0; i < num_experts; ++i)
      experts.push_back(std::make_unique<Expert>("expert_" + std::to_string(i), in, hidden, out, rng));
  }

  /// [B, in] -> [B, E] simplex weights.
  Var gate_weights(Context& ctx, Var f) { return ad::softmax(gate(ctx, f), 1); }

  Var operator()(Context& ctx, Var f) {
    Var g = gate_weights(ctx, f);
    Var y = ad::broadcast_mul((*experts[0])(ctx, f), ad::column(g, 0));
    for (std::size_t i = 1; i < experts.size(); ++i)
      y = ad::add(y, ad::broadcast_mul((*experts[i])(ctx, f), ad::column(g, i)));
    return y;
  }

  std::size_t num_experts() const { return experts.size(); }

  void collect(std::vector<Parameter*>& out) override {
    gate.collect(out);
    for (auto& e : experts) e->collect(out);
  }
  void collect_buffers(std::vector<Buffer>& out) override {
    for (auto& e : experts) e->collect_buffers(out);
  }

  Linear gate;
  std::vector<std::unique_ptr<Expert>> experts;
};

}  // namespace bp6::nn
