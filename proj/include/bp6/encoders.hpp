#pragma once

// Modality encoders: a causal dilated TCN for ECG and a channel-attention CNN
// (conv, batch norm, relu, max pool, squeeze-excitation) for the others.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bp6/model_config.hpp"
#include "bp6/nn.hpp"

namespace bp6::nn {

/// Linear layers with relu + dropout between them; the last layer is raw.
class MlpStack : public Layer {
 public:
  MlpStack(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
           double dropout, std::mt19937_64& rng)
      : dropout_(dropout) {
    std::size_t width = in;
    for (std::size_t i = 0; i <= hidden.size(); ++i) {
      const std::size_t next = i < hidden.size() ? hidden[i] : out;
      layers_.push_back(std::make_unique<Linear>(name + "." + std::to_string(i), width, next, rng));
      width = next;
    }
  }

  Var operator()(Context& ctx, Var x) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = (*layers_[i])(ctx, x);
      if (i + 1 < layers_.size()) x = dropout(ctx, ad::relu(x), dropout_);
    }
    return x;
  }

  void collect(std::vector<Parameter*>& out) override {
    for (auto& l : layers_) l->collect(out);
  }

  std::size_t in_features() const { return layers_.front()->in_features(); }

 private:
  std::vector<std::unique_ptr<Linear>> layers_;
  double dropout_;
};

class TcnEncoder : public Layer {
 public:
  TcnEncoder(const std::string& name, std::size_t in_channels, std::size_t length, const TcnConfig& cfg,
             std::size_t embed_dim, std::mt19937_64& rng)
      : in_channels_(in_channels), length_(length), dropout_(cfg.dropout) {
    std::size_t ch = in_channels, len = length;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      const std::string lvl = name + ".level" + std::to_string(i + 1);
      // Zero left padding of dilation*(k-1) keeps the convolution causal and length-preserving.
      const ad::Conv1dOptions opt{1, cfg.dilations[i], cfg.dilations[i] * (cfg.kernel - 1)};
      convs_.push_back(std::make_unique<Conv1d>(lvl + ".conv", ch, cfg.channels[i], cfg.kernel, opt, rng));
      bns_.push_back(std::make_unique<BatchNorm1d>(lvl + ".bn", cfg.channels[i]));
      len = convs_.back()->output_length(len);
      ch = cfg.channels[i];
      level_lengths_.push_back(len);
    }
    flatten_features_ = ch * len;
    fc_ = std::make_unique<MlpStack>(name + ".fc", flatten_features_, cfg.fc, embed_dim, cfg.dropout, rng);
  }

  /// Conv stack output [B, C_last, L] before flattening.
  Var features(Context& ctx, Var x) {
    const auto& s = x.shape();
    if (s.size() != 3 || s[1] != in_channels_ || s[2] != length_) {
      throw ShapeError("tcn: expected input [B," + std::to_string(in_channels_) + "," + std::to_string(length_) +
                       "], got " + ad::to_string(s));
    }
    for (std::size_t i = 0; i < convs_.size(); ++i)
      x = dropout(ctx, ad::relu((*bns_[i])(ctx, (*convs_[i])(ctx, x))), dropout_);
    return x;
  }

  Var operator()(Context& ctx, Var x) { return (*fc_)(ctx, ad::flatten(features(ctx, x))); }

  std::size_t flatten_features() const { return flatten_features_; }
  const std::vector<std::size_t>& level_lengths() const { return level_lengths_; }

  void collect(std::vector<Parameter*>& out) override {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i]->collect(out);
      bns_[i]->collect(out);
    }
    fc_->collect(out);
  }
  void collect_buffers(std::vector<Buffer>& out) override {
    for (auto& bn : bns_) bn->collect_buffers(out);
  }

 private:
  std::size_t in_channels_, length_;
  double dropout_;
  std::vector<std::unique_ptr<Conv1d>> convs_;
  std::vector<std::unique_ptr<BatchNorm1d>> bns_;
  std::vector<std::size_t> level_lengths_;
  std::size_t flatten_features_ = 0;
  std::unique_ptr<MlpStack> fc_;
};

class CacnnEncoder : public Layer {
 public:
  CacnnEncoder(const std::string& name, std::size_t in_channels, std::size_t length, const CacnnConfig& cfg,
               std::size_t embed_dim, std::mt19937_64& rng)
      : in_channels_(in_channels), length_(length), pool_k_(cfg.pool_kernel), pool_s_(cfg.pool_stride) {
    std::size_t ch = in_channels, len = length;
    for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
      const std::string lvl = name + ".level" + std::to_string(i + 1);
      convs_.push_back(std::make_unique<Conv1d>(lvl + ".conv", ch, cfg.channels, cfg.kernels[i], ad::Conv1dOptions{}, rng));
      bns_.push_back(std::make_unique<BatchNorm1d>(lvl + ".bn", cfg.channels));
      ses_.push_back(std::make_unique<SeBlock>(lvl + ".se", cfg.channels, cfg.se_reduction, rng));
      len = convs_.back()->output_length(len);
      conv_lengths_.push_back(len);
      len = ad::maxpool1d_output_length(len, pool_k_, pool_s_);
      pool_lengths_.push_back(len);
      if (len == 0) {
        throw ConfigError(name + ": input length " + std::to_string(length) + " is too short for level " +
                          std::to_string(i + 1));
      }
      ch = cfg.channels;
    }
    flatten_features_ = ch * len;
    fc_ = std::make_unique<MlpStack>(name + ".fc", flatten_features_, cfg.fc, embed_dim, cfg.dropout, rng);
  }

  Var features(Context& ctx, Var x) {
    const auto& s = x.shape();
    if (s.size() != 3 || s[1] != in_channels_ || s[2] != length_) {
      throw ShapeError("cacnn: expected input [B," + std::to_string(in_channels_) + "," + std::to_string(length_) +
                       "], got " + ad::to_string(s));
    }
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = ad::relu((*bns_[i])(ctx, (*convs_[i])(ctx, x)));
      x = (*ses_[i])(ctx, ad::maxpool1d(x, pool_k_, pool_s_));
    }
    return x;
  }

  Var operator()(Context& ctx, Var x) { return (*fc_)(ctx, ad::flatten(features(ctx, x))); }

  std::size_t flatten_features() const { return flatten_features_; }
  const std::vector<std::size_t>& conv_lengths() const { return conv_lengths_; }
  const std::vector<std::size_t>& pool_lengths() const { return pool_lengths_; }
  SeBlock& se(std::size_t level) { return *ses_.at(level); }

  void collect(std::vector<Parameter*>& out) override {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i]->collect(out);
      bns_[i]->collect(out);
      ses_[i]->collect(out);
    }
    fc_->collect(out);
  }
  void collect_buffers(std::vector<Buffer>& out) override {
    for (auto& bn : bns_) bn->collect_buffers(out);
  }

 private:
  std::size_t in_channels_, length_, pool_k_, pool_s_;
  std::vector<std::unique_ptr<Conv1d>> convs_;
  std::vector<std::unique_ptr<BatchNorm1d>> bns_;
  std::vector<std::unique_ptr<SeBlock>> ses_;
  std::vector<std::size_t> conv_lengths_, pool_lengths_;
  std::size_t flatten_features_ = 0;
  std::unique_ptr<MlpStack> fc_;
};

}  // namespace bp6::nn
