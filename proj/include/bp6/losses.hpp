#pragma once

// Regression and cross-modal contrastive losses.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "bp6/autodiff.hpp"
#include "bp6/modality.hpp"

namespace bp6::loss {

using ad::Tensor;
using ad::Var;

struct LossConfig {
  double lambda_contrastive = 0.3;
  double tau = 0.5;
  std::size_t k_negatives = 5;

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("loss.tau must be > 0");
    if (k_negatives < 1) throw ConfigError("loss.k_negatives must be >= 1");
    if (!(lambda_contrastive >= 0.0)) throw ConfigError("loss.lambda must be >= 0");
  }
};

/// (1/B) sum_i ||y_i - yhat_i||^2 over [B, 2] batches.
inline Var mse_loss(Var pred, Var target) {
  const auto& s = pred.shape();
  if (s != target.shape() || s.size() != 2) {
    throw ShapeError("mse_loss: prediction " + ad::to_string(s) + " vs target " + ad::to_string(target.shape()));
  }
  return ad::scale(ad::sum(ad::square(ad::sub(pred, target))), 1.0 / static_cast<double>(s[0]));
}

/// Cosine similarity of two vectors; a zero-norm side yields 0 and bumps `degenerate`.
inline Var cosine_sim(Var u, Var v, std::size_t* degenerate = nullptr) {
  if (u.shape().size() != 1) throw ShapeError("cosine_sim: expected vectors, got " + ad::to_string(u.shape()));
  return ad::cosine_similarity(u, v, degenerate);
}

/// negatives[i] holds the K batch indices paired against anchor i.
using Negatives = std::vector<std::vector<std::size_t>>;

/// K distinct indices from {0..B-1} \ {i} for every anchor i.
inline Negatives sample_negatives(std::size_t batch, std::size_t k, std::mt19937_64& rng) {
  if (batch < k + 1) {
    throw ConfigError("batch of " + std::to_string(batch) + " cannot supply " + std::to_string(k) +
                      " negatives per anchor (need at least " + std::to_string(k + 1) + ")");
  }
  Negatives out(batch);
  std::vector<std::size_t> pool(batch - 1);
  for (std::size_t i = 0; i < batch; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < batch; ++j)
      if (j != i) pool[w++] = j;
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t s = 0; s < k; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, pool.size() - 1);
      std::swap(pool[s], pool[pick(rng)]);
    }
    out[i].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

/// InfoNCE of anchor batch against its positive partner batch with the given
/// negatives: -(1/B) sum_i log( e^{d_ii/tau} / (e^{d_ii/tau} + sum_j e^{d_ij/tau}) ).
inline Var pair_infonce(Var anchor, Var other, const Negatives& negatives, double tau,
                        std::size_t* degenerate = nullptr) {
  const auto& s = anchor.shape();
  if (s.size() != 2 || s != other.shape()) {
    throw ShapeError("pair_infonce: embeddings " + ad::to_string(s) + " and " + ad::to_string(other.shape()));
  }
  const std::size_t batch = s[0];
  if (negatives.size() != batch || batch == 0) throw ContractError("pair_infonce: one negative list per anchor required");
  const std::size_t k = negatives[0].size();
  std::vector<std::size_t> rows_a, rows_o;
  for (std::size_t i = 0; i < batch; ++i) {
    if (negatives[i].size() != k) throw ContractError("pair_infonce: ragged negative lists");
    for (std::size_t j : negatives[i]) {
      if (j == i || j >= batch) throw ContractError("pair_infonce: invalid negative index " + std::to_string(j));
      rows_a.push_back(i);
      rows_o.push_back(j);
    }
  }
  Var d_pos = ad::reshape(ad::cosine_similarity(anchor, other, degenerate), {batch, 1});
  Var d_neg = ad::reshape(
      ad::cosine_similarity(ad::gather_rows(anchor, rows_a), ad::gather_rows(other, rows_o), degenerate), {batch, k});
  const std::array parts{d_pos, d_neg};
  Var logits = ad::scale(ad::concat(parts, 1), 1.0 / tau);
  Var p_pos = ad::column(ad::softmax(logits, 1), 0);
  return ad::scale(ad::sum(ad::log(p_pos)), -1.0 / static_cast<double>(batch));
}

inline Var pair_infonce(Var anchor, Var other, const LossConfig& cfg, std::mt19937_64& rng,
                        std::size_t* degenerate = nullptr) {
  return pair_infonce(anchor, other, sample_negatives(anchor.shape().at(0), cfg.k_negatives, rng), cfg.tau,
                      degenerate);
}

/// The 15 unordered modality pairs (p, q), p < q in canonical order; p is the anchor.
inline std::vector<std::pair<std::size_t, std::size_t>> modality_pairs() {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t p = 0; p < kNumModalities; ++p)
    for (std::size_t q = p + 1; q < kNumModalities; ++q) pairs.emplace_back(p, q);
  return pairs;
}

/// Mean pair InfoNCE over all modality pairs; negatives re-drawn for every pair.
inline Var contrastive_loss(std::span<const Var> emb, const LossConfig& cfg, std::mt19937_64& rng,
                            std::size_t* degenerate = nullptr) {
  if (emb.size() != kNumModalities) throw ContractError("contrastive_loss: six embedding batches required");
  std::vector<Var> terms;
  for (auto [p, q] : modality_pairs()) terms.push_back(pair_infonce(emb[p], emb[q], cfg, rng, degenerate));
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

/// Same, with one fixed negative assignment shared by every pair (for gradient checks).
inline Var contrastive_loss(std::span<const Var> emb, const LossConfig& cfg, const Negatives& negatives,
                            std::size_t* degenerate = nullptr) {
  if (emb.size() != kNumModalities) throw ContractError("contrastive_loss: six embedding batches required");
  std::vector<Var> terms;
  for (auto [p, q] : modality_pairs()) terms.push_back(pair_infonce(emb[p], emb[q], negatives, cfg.tau, degenerate));
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

struct LossParts {
  Var total;
  Var mse;
  Var contrastive;
};

inline LossParts combine(Var mse, Var contrastive, double lambda) {
  return {ad::add(mse, ad::scale(contrastive, lambda)), mse, contrastive};
}

inline LossParts total_loss(Var pred, Var target, std::span<const Var> emb, const LossConfig& cfg,
                            std::mt19937_64& rng, std::size_t* degenerate = nullptr) {
  return combine(mse_loss(pred, target), contrastive_loss(emb, cfg, rng, degenerate), cfg.lambda_contrastive);
}

inline LossParts total_loss(Var pred, Var target, std::span<const Var> emb, const LossConfig& cfg,
                            const Negatives& negatives, std::size_t* degenerate = nullptr) {
  return combine(mse_loss(pred, target), contrastive_loss(emb, cfg, negatives, degenerate), cfg.lambda_contrastive);
}

}  // namespace bp6::loss
