#pragma once

// The six-branch blood-pressure regressor: one encoder per modality, fused
// features, mixture-of-experts head and a fixed label de-normalization.

#include <array>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bp6/encoders.hpp"
#include "bp6/modality.hpp"
#include "bp6/model_config.hpp"
#include "bp6/moe.hpp"

namespace bp6::nn {

/// Six input blocks, each [B, C_m, L], in canonical modality order.
using ModalBatch = std::array<Tensor, kNumModalities>;

struct ModelOutput {
  Var prediction;  // [B, 2] (SBP, DBP) in mmHg
  std::array<Var, kNumModalities> embeddings;
  Var fused;
};

class BpModel : public Layer {
 public:
  BpModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    tcn = std::make_unique<TcnEncoder>(std::string(kModalities[0].encoder), kModalities[0].channels,
                                       cfg.segment_length, cfg.tcn, cfg.embed_dim, rng);
    for (std::size_t m = 1; m < kNumModalities; ++m) {
      cacnn[m - 1] = std::make_unique<CacnnEncoder>(std::string(kModalities[m].encoder), kModalities[m].channels,
                                                    cfg.segment_length, cfg.cacnn, cfg.embed_dim, rng);
    }
    head = std::make_unique<MoeHead>(kNumModalities * cfg.embed_dim, cfg.num_experts, cfg.expert_hidden, 2, rng);
  }

  ModelOutput forward(Context& ctx, const ModalBatch& x) {
    ModelOutput out;
    const std::size_t batch = x[0].rank() > 0 ? x[0].dim(0) : 0;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      if (x[m].rank() == 0 || x[m].dim(0) != batch) {
        throw ShapeError("model: modality " + std::string(kModalities[m].key) + " batch " +
                         ad::to_string(x[m].shape) + " disagrees with batch size " + std::to_string(batch));
      }
      Var in = ctx.tape.constant(x[m]);
      out.embeddings[m] = m == 0 ? (*tcn)(ctx, in) : (*cacnn[m - 1])(ctx, in);
    }
    out.fused = fuse(out.embeddings, cfg_.embed_dim);
    Var raw = (*head)(ctx, out.fused);
    // Experts regress standardized labels; map back to mmHg with fixed statistics.
    Tensor scale({batch, 2}), shift({batch, 2});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t k = 0; k < 2; ++k) {
        scale[b * 2 + k] = label_scale[k];
        shift[b * 2 + k] = label_mean[k];
      }
    out.prediction = ad::add(ad::mul(raw, ctx.tape.constant(std::move(scale))), ctx.tape.constant(std::move(shift)));
    return out;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> ps;
    collect(ps);
    return ps;
  }

  /// Running statistics and the label de-normalization, in a stable order.
  std::vector<Buffer> buffers() {
    std::vector<Buffer> bs;
    collect_buffers(bs);
    return bs;
  }

  void collect(std::vector<Parameter*>& out) override {
    tcn->collect(out);
    for (auto& c : cacnn) c->collect(out);
    head->collect(out);
  }
  void collect_buffers(std::vector<Buffer>& out) override {
    tcn->collect_buffers(out);
    for (auto& c : cacnn) c->collect_buffers(out);
    head->collect_buffers(out);
    out.push_back({"head.label_mean", &label_mean});
    out.push_back({"head.label_scale", &label_scale});
  }

  /// Parameters belonging to one modality encoder (for gradient-flow checks).
  std::vector<Parameter*> encoder_parameters(std::size_t modality) {
    std::vector<Parameter*> ps;
    if (modality == 0) tcn->collect(ps);
    else cacnn.at(modality - 1)->collect(ps);
    return ps;
  }

  const ModelConfig& config() const { return cfg_; }

  std::unique_ptr<TcnEncoder> tcn;
  std::array<std::unique_ptr<CacnnEncoder>, kNumModalities - 1> cacnn;
  std::unique_ptr<MoeHead> head;
  Tensor label_mean{Shape{2}, 0.0};
  Tensor label_scale{Shape{2}, 1.0};

 private:
  ModelConfig cfg_;
};

}  // namespace bp6::nn
