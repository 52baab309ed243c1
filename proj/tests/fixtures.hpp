#pragma once

#include <random>

#include "bp6/model.hpp"

namespace bp6::testing {

/// Narrow model used wherever the paper widths would only cost time.
inline ModelConfig small_model_config(std::size_t length = 1000) {
  ModelConfig c;
  c.segment_length = length;
  c.embed_dim = 16;
  c.tcn.channels = {6, 5, 3};
  c.tcn.fc = {24, 12};
  c.cacnn.channels = 9;
  c.cacnn.fc = {16, 12};
  c.num_experts = 3;
  c.expert_hidden = {12, 8};
  return c;
}

inline ad::Tensor random_tensor(ad::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Tensor t(std::move(s));
  for (double& v : t.data) v = u(rng);
  return t;
}

inline nn::ModalBatch random_batch(std::size_t batch, std::size_t length, std::uint64_t seed) {
  nn::ModalBatch x;
  for (std::size_t m = 0; m < kNumModalities; ++m)
    x[m] = random_tensor({batch, kModalities[m].channels, length}, seed * 31 + m);
  return x;
}

}  // namespace bp6::testing
