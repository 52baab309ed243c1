#pragma once

// Mini-batch training loop. One seeded generator drives shuffling, dropout
// masks and negative sampling, so a run is a pure function of its seed.

#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bp6/adam.hpp"
#include "bp6/dataset.hpp"
#include "bp6/losses.hpp"
#include "bp6/model.hpp"

namespace bp6::train {

struct TrainConfig {
  std::size_t batch_size = 24;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  optim::AdamConfig adam{};
  // Optional budget cut: stop once the eval-mode train MAE of both targets is below this (0 disables).
  double stop_train_mae = 0.0;

  void validate(const loss::LossConfig& lc) const {
    if (batch_size < lc.k_negatives + 1) {
      throw ConfigError("train.batch_size " + std::to_string(batch_size) + " must be >= loss.k_negatives + 1 (" +
                        std::to_string(lc.k_negatives + 1) + ")");
    }
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  }
};

/// NaN or Inf loss. Carries the position and the loss components.
class TrainingAborted : public Error {
 public:
  TrainingAborted(std::size_t epoch, std::size_t batch, double mse, double contrastive)
      : Error("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + " (mse " +
              std::to_string(mse) + ", contrastive " + std::to_string(contrastive) + ")"),
        epoch(epoch),
        batch(batch),
        mse(mse),
        contrastive(contrastive) {}
  std::size_t epoch, batch;
  double mse, contrastive;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_mse = 0, train_contrastive = 0, train_total = 0;
  double val_mae_sbp = 0, val_mae_dbp = 0;
  double train_mae_sbp = 0, train_mae_dbp = 0;
  double lambda = 0;
};

inline std::string metrics_csv_header() {
  return "epoch,train_mse,train_contrastive,train_total,val_mae_sbp,val_mae_dbp,train_mae_sbp,train_mae_dbp,lambda";
}

inline std::string metrics_csv_row(const EpochMetrics& m) {
  std::ostringstream os;
  os.precision(17);
  os << m.epoch << ',' << m.train_mse << ',' << m.train_contrastive << ',' << m.train_total << ',' << m.val_mae_sbp
     << ',' << m.val_mae_dbp << ',' << m.train_mae_sbp << ',' << m.train_mae_dbp << ',' << m.lambda;
  return os.str();
}

/// Stacks the chosen samples into six [B, C_m, L] tensors plus a [B, 2] target.
inline std::pair<nn::ModalBatch, ad::Tensor> make_batch(const std::vector<data::SixModalSample>& samples,
                                                        std::span<const std::size_t> idx) {
  nn::ModalBatch x;
  const std::size_t b = idx.size();
  const std::size_t len = samples.at(idx[0]).blocks[0].size() / kModalities[0].channels;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const std::size_t per = kModalities[m].channels * len;
    x[m] = ad::Tensor({b, kModalities[m].channels, len});
    for (std::size_t i = 0; i < b; ++i) {
      const auto& blk = samples.at(idx[i]).blocks[m];
      if (blk.size() != per) throw ShapeError("make_batch: sample block " + std::string(kModalities[m].key) + " has wrong size");
      std::copy(blk.begin(), blk.end(), x[m].data.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
  }
  ad::Tensor y({b, 2});
  for (std::size_t i = 0; i < b; ++i) {
    y[i * 2] = samples[idx[i]].sbp;
    y[i * 2 + 1] = samples[idx[i]].dbp;
  }
  return {std::move(x), std::move(y)};
}

/// Eval-mode (SBP, DBP) predictions, in the order of idx.
inline std::vector<std::array<double, 2>> predict(nn::BpModel& model, const std::vector<data::SixModalSample>& samples,
                                                  std::span<const std::size_t> idx, std::size_t batch = 32) {
  std::vector<std::array<double, 2>> out;
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    const auto chunk = idx.subspan(start, std::min(batch, idx.size() - start));
    auto [x, y] = make_batch(samples, chunk);
    ad::Tape tape;
    auto ctx = nn::Context::eval(tape);
    const auto pred = model.forward(ctx, x).prediction.value();
    for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back({pred[i * 2], pred[i * 2 + 1]});
  }
  return out;
}

inline std::array<double, 2> mean_absolute_error(nn::BpModel& model, const std::vector<data::SixModalSample>& samples,
                                                 std::span<const std::size_t> idx) {
  if (idx.empty()) return {0.0, 0.0};
  const auto pred = predict(model, samples, idx);
  std::array<double, 2> mae{0.0, 0.0};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    mae[0] += std::abs(pred[i][0] - samples[idx[i]].sbp);
    mae[1] += std::abs(pred[i][1] - samples[idx[i]].dbp);
  }
  for (double& v : mae) v /= static_cast<double>(idx.size());
  return mae;
}

/// Sets the model's output de-normalization to the train-split label mean and std.
inline void fit_label_scaling(nn::BpModel& model, const std::vector<data::SixModalSample>& samples,
                              std::span<const std::size_t> train_idx) {
  for (std::size_t k = 0; k < 2; ++k) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i : train_idx) mean += k == 0 ? samples[i].sbp : samples[i].dbp;
    mean /= static_cast<double>(train_idx.size());
    for (std::size_t i : train_idx) sq += std::pow((k == 0 ? samples[i].sbp : samples[i].dbp) - mean, 2);
    const double sd = std::sqrt(sq / static_cast<double>(train_idx.size()));
    model.label_mean[k] = mean;
    model.label_scale[k] = sd > 1e-6 ? sd : 1.0;
  }
}

struct FitResult {
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;
  double best_val_mae = INFINITY;  // mean of SBP and DBP MAE
  std::map<std::string, ad::Tensor> best_state;
};

/// Called after every epoch; returning false stops the run.
using EpochCallback = std::function<bool(const EpochMetrics&)>;

inline FitResult fit(nn::BpModel& model, const std::vector<data::SixModalSample>& samples,
                     const data::DatasetSplit& split, const TrainConfig& tc, const loss::LossConfig& lc,
                     const EpochCallback& on_epoch = {}) {
  tc.validate(lc);
  lc.validate();
  if (split.train.size() < lc.k_negatives + 1) {
    throw ConfigError("training split of " + std::to_string(split.train.size()) + " samples cannot supply " +
                      std::to_string(lc.k_negatives) + " negatives per anchor");
  }
  if (split.validation.empty()) throw ContractError("fit: validation split is empty");

  std::mt19937_64 rng(tc.seed);
  fit_label_scaling(model, samples, split.train);
  auto params = model.parameters();
  optim::Adam adam(tc.adam);
  FitResult result;
  auto snapshot = [&] {
    result.best_state.clear();
    for (const ad::Parameter* p : params) result.best_state.emplace(p->name, p->value);
    for (const ad::Buffer& b : model.buffers()) result.best_state.emplace(b.name, *b.tensor);
  };

  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics em;
    em.epoch = epoch;
    em.lambda = lc.lambda_contrastive;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t n = std::min(tc.batch_size, order.size() - start);
      if (n < lc.k_negatives + 1) break;  // a short tail cannot supply K negatives
      const std::span<const std::size_t> idx(order.data() + start, n);
      auto [x, y] = make_batch(samples, idx);

      ad::Tape tape;
      nn::Context ctx{tape, ad::Mode::train, ad::Mode::train, &rng};
      const auto out = model.forward(ctx, x);
      const auto parts = loss::total_loss(out.prediction, tape.constant(y), out.embeddings, lc, rng);
      const double total = parts.total.value().item();
      const double mse = parts.mse.value().item(), con = parts.contrastive.value().item();
      if (!std::isfinite(total)) throw TrainingAborted(epoch, batches + 1, mse, con);
      for (ad::Parameter* p : params) p->zero_grad();
      tape.backward(parts.total);
      adam.step(params);

      em.train_mse += mse;
      em.train_contrastive += con;
      em.train_total += total;
      ++batches;
    }
    if (batches > 0) {
      em.train_mse /= static_cast<double>(batches);
      em.train_contrastive /= static_cast<double>(batches);
      em.train_total /= static_cast<double>(batches);
    }
    const auto val = mean_absolute_error(model, samples, split.validation);
    const auto tr = mean_absolute_error(model, samples, split.train);
    em.val_mae_sbp = val[0];
    em.val_mae_dbp = val[1];
    em.train_mae_sbp = tr[0];
    em.train_mae_dbp = tr[1];
    result.log.push_back(em);

    const double score = 0.5 * (val[0] + val[1]);
    if (score < result.best_val_mae) {
      result.best_val_mae = score;
      result.best_epoch = epoch;
      snapshot();
    }
    if (on_epoch && !on_epoch(em)) break;
    if (tc.stop_train_mae > 0.0 && tr[0] < tc.stop_train_mae && tr[1] < tc.stop_train_mae) break;
  }
  return result;
}

/// Restores a snapshot taken by fit().
inline void restore(nn::BpModel& model, const std::map<std::string, ad::Tensor>& state) {
  for (ad::Parameter* p : model.parameters()) p->value = state.at(p->name);
  for (ad::Buffer& b : model.buffers()) *b.tensor = state.at(b.name);
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << metrics_csv_header() << '\n';
  for (const auto& m : log) out << metrics_csv_row(m) << '\n';
}

}  // namespace bp6::train
