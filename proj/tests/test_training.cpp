#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "bp6/checkpoint.hpp"
#include "bp6/config.hpp"
#include "bp6/synth.hpp"
#include "bp6/trainer.hpp"
#include "fixtures.hpp"

namespace {

using namespace bp6;
namespace fs = std::filesystem;

ModelConfig tiny() {
  auto c = bp6::testing::small_model_config();
  c.tcn.dropout = 0.0;
  c.cacnn.dropout = 0.0;
  return c;
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
  nn::BpModel a(tiny(), 1);
  a.label_mean[0] = 117.25;
  a.label_scale[1] = 8.5;
  const auto bytes = encode_checkpoint(make_checkpoint(a, {{"seed", "1"}}));
  const Checkpoint ck = decode_checkpoint(bytes);
  EXPECT_EQ(ck.meta.at("seed"), "1");
  EXPECT_EQ(ck.meta.at("model.embed_dim"), "16");

  nn::BpModel b(tiny(), 2);
  apply_checkpoint(ck, b);
  auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i]->value.size(); ++k)
      ASSERT_EQ(pb[i]->value[k], static_cast<double>(static_cast<float>(pa[i]->value[k]))) << pa[i]->name;
  EXPECT_EQ(b.label_mean[0], 117.25);
  EXPECT_EQ(b.label_scale[1], 8.5);

  auto c = model_from_checkpoint(ck);
  EXPECT_EQ(c->config().to_kv(), a.config().to_kv());
}

TEST(Checkpoint, CorruptionAndMismatch) {
  nn::BpModel a(tiny(), 1);
  auto bytes = encode_checkpoint(make_checkpoint(a));
  auto bad = bytes;
  bad[bad.size() / 2] ^= 4;
  EXPECT_THROW(decode_checkpoint(bad), CorruptStoreError);
  bad = bytes;
  bad[1] = 'Q';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);

  auto other = tiny();
  other.num_experts = 2;
  nn::BpModel b(other, 1);
  try {
    apply_checkpoint(decode_checkpoint(bytes), b);
    FAIL();
  } catch (const ConfigMismatch& e) {
    EXPECT_EQ(e.key, "model.num_experts");
  }
}

TEST(Config, DefaultsArePublishedValues) {
  const RunConfig c;
  EXPECT_EQ(c.train.batch_size, 24u);
  EXPECT_EQ(c.train.adam.lr, 3e-4);
  EXPECT_EQ(c.train.epochs, 100u);
  EXPECT_EQ(c.loss.lambda_contrastive, 0.3);
  EXPECT_EQ(c.loss.tau, 0.5);
  EXPECT_EQ(c.loss.k_negatives, 5u);
  EXPECT_EQ(c.preprocess.window_samples, 5000u);
  EXPECT_EQ(c.preprocess.decimate_factor, 5);
  EXPECT_EQ(c.preprocess.ecg.vmd.k_modes, 6);
  EXPECT_EQ(c.preprocess.ecg.wavelet.levels, 4);
  EXPECT_EQ(c.model.num_experts, 4u);
}

TEST(Config, FileRoundTripAndHash) {
  const fs::path p = fs::temp_directory_path() / ("bp6_cfg_" + std::to_string(::getpid()) + ".cfg");
  RunConfig c;
  c.model = tiny();
  c.train.epochs = 7;
  c.loss.lambda_contrastive = 0.0;
  c.seed = 99;
  c.train.seed = 99;
  std::ofstream(p) << format_run_config(c);
  const RunConfig d = load_run_config(p);
  EXPECT_EQ(d.to_kv(), c.to_kv());
  EXPECT_EQ(d.hash(), c.hash());
  EXPECT_EQ(d.train.seed, 99u);

  RunConfig e = d;
  e.seed = 5;
  e.store = "/elsewhere";
  EXPECT_EQ(e.hash(), d.hash());
  e.loss.tau = 0.4;
  EXPECT_NE(e.hash(), d.hash());
  EXPECT_EQ(d.hash().size(), 16u);
  fs::remove(p);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(RunConfig::from_kv({{"train.batchsize", "24"}}), ConfigError);
  try {
    RunConfig::from_kv({{"loss.tau", "half"}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("loss.tau"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::from_kv({{"train.batch_size", "5"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_kv({{"model.segment_length", "500"}}), ConfigError);
}

TEST(Config, SeedResolutionOrder) {
  ::unsetenv("BP6_SEED");
  EXPECT_EQ(resolve_seed(std::nullopt, 3), 3u);
  ::setenv("BP6_SEED", "11", 1);
  EXPECT_EQ(resolve_seed(std::nullopt, 3), 11u);
  EXPECT_EQ(resolve_seed(17, 3), 17u);
  ::setenv("BP6_SEED", "x", 1);
  EXPECT_THROW(resolve_seed(std::nullopt, 3), ConfigError);
  ::unsetenv("BP6_SEED");
}

TEST(Training, GradientReachesEverySixEncoders) {
  nn::BpModel model(bp6::testing::small_model_config(), 3);
  const auto set = data::synth_generate(8, 3);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  auto [x, y] = train::make_batch(set.samples, idx);
  std::mt19937_64 rng(4);
  ad::Tape tape;
  nn::Context ctx{tape, ad::Mode::train, ad::Mode::train, &rng};
  const auto out = model.forward(ctx, x);
  const auto parts = loss::total_loss(out.prediction, tape.constant(y), out.embeddings, loss::LossConfig{}, rng);
  for (auto* p : model.parameters()) p->zero_grad();
  tape.backward(parts.total);
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    double norm = 0;
    for (auto* p : model.encoder_parameters(m))
      for (double g : p->grad.data) norm += g * g;
    EXPECT_GT(norm, 0.0) << kModalities[m].encoder;
  }
}

TEST(Training, MakeBatchLayout) {
  const auto set = data::synth_generate(3, 5);
  std::vector<std::size_t> idx{2, 0};
  auto [x, y] = train::make_batch(set.samples, idx);
  EXPECT_EQ(x[1].shape, (ad::Shape{2, 6, 1000}));
  EXPECT_EQ(x[1][1000 * 6 + 1000 + 7], set.samples[0].blocks[1][1000 + 7]);
  EXPECT_EQ(y[0], set.samples[2].sbp);
  EXPECT_EQ(y[3], set.samples[0].dbp);
}

struct SmallRun {
  data::SynthSet set = data::synth_generate(40, 21);
  data::DatasetSplit split = data::split_dataset(set.samples, 21);
};

TEST(Training, SameSeedGivesIdenticalLogs) {
  SmallRun r;
  train::TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 8;
  auto run = [&] {
    nn::BpModel model(bp6::testing::small_model_config(), 8);
    const auto res = train::fit(model, r.set.samples, r.split, tc, loss::LossConfig{});
    std::string log;
    for (const auto& m : res.log) log += train::metrics_csv_row(m) + "\n";
    return log;
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  tc.seed = 9;
  EXPECT_NE(a, run());
}

TEST(Training, LambdaSweepCompletesAndIsLogged) {
  SmallRun r;
  for (double lambda : {0.0, 0.3}) {
    nn::BpModel model(tiny(), 1);
    train::TrainConfig tc;
    tc.epochs = 2;
    loss::LossConfig lc;
    lc.lambda_contrastive = lambda;
    const auto res = train::fit(model, r.set.samples, r.split, tc, lc);
    ASSERT_EQ(res.log.size(), 2u);
    EXPECT_EQ(res.log[1].lambda, lambda);
    if (lambda == 0.0) {
      EXPECT_DOUBLE_EQ(res.log[0].train_total, res.log[0].train_mse);
    }
    EXPECT_GE(res.best_epoch, 1u);
  }
}

TEST(Training, BestSnapshotReproducesBestValidation) {
  SmallRun r;
  nn::BpModel model(tiny(), 2);
  train::TrainConfig tc;
  tc.epochs = 4;
  tc.adam.lr = 1e-3;
  const auto res = train::fit(model, r.set.samples, r.split, tc, loss::LossConfig{});
  train::restore(model, res.best_state);
  const auto mae = train::mean_absolute_error(model, r.set.samples, r.split.validation);
  EXPECT_DOUBLE_EQ(0.5 * (mae[0] + mae[1]), res.best_val_mae);
  const auto& best = res.log[res.best_epoch - 1];
  EXPECT_DOUBLE_EQ(mae[0], best.val_mae_sbp);
}

TEST(Training, NonFiniteLossAborts) {
  SmallRun r;
  nn::BpModel model(tiny(), 2);
  model.head->gate.bias.value[0] = NAN;
  train::TrainConfig tc;
  tc.epochs = 1;
  try {
    train::fit(model, r.set.samples, r.split, tc, loss::LossConfig{});
    FAIL();
  } catch (const train::TrainingAborted& e) {
    EXPECT_EQ(e.epoch, 1u);
    EXPECT_EQ(e.batch, 1u);
  }
}

TEST(Training, RejectsBatchTooSmallForNegatives) {
  SmallRun r;
  nn::BpModel model(tiny(), 2);
  train::TrainConfig tc;
  tc.batch_size = 5;
  EXPECT_THROW(train::fit(model, r.set.samples, r.split, tc, loss::LossConfig{}), ConfigError);
}

TEST(Training, LabelScalingUsesTrainSplit) {
  SmallRun r;
  nn::BpModel model(tiny(), 2);
  train::fit_label_scaling(model, r.set.samples, r.split.train);
  double mean = 0;
  for (auto i : r.split.train) mean += r.set.samples[i].sbp;
  EXPECT_NEAR(model.label_mean[0], mean / r.split.train.size(), 1e-9);
  EXPECT_GT(model.label_scale[1], 1.0);
}

TEST(Config, ShippedFilesLoad) {
  const RunConfig paper = load_run_config(fs::path(BP6_SOURCE_DIR) / "paper.cfg");
  EXPECT_EQ(paper.to_kv(), RunConfig{}.to_kv());
  EXPECT_EQ(paper.hash(), RunConfig{}.hash());
  const RunConfig smoke = load_run_config(fs::path(BP6_SOURCE_DIR) / "configs" / "smoke.cfg");
  EXPECT_EQ(smoke.model.embed_dim, 16u);
  EXPECT_EQ(smoke.train.epochs, 500u);
  EXPECT_EQ(smoke.seed, 7u);
}

// Learnability: the smoke configuration memorizes a 64-sample synthetic store
// (eval-mode train MAE below 2 mmHg on both targets) within its 500-epoch budget.
TEST(Training, SyntheticStoreIsLearnable) {
  const RunConfig cfg = load_run_config(fs::path(BP6_SOURCE_DIR) / "configs" / "smoke.cfg");
  const auto set = data::synth_generate(64, cfg.seed);
  const auto split = data::split_dataset(set.samples, cfg.seed);
  nn::BpModel model(cfg.model, cfg.seed);
  const auto res = train::fit(model, set.samples, split, cfg.train, cfg.loss);
  const auto& last = res.log.back();
  EXPECT_LE(res.log.size(), 500u);
  EXPECT_LT(last.train_mae_sbp, 2.0);
  EXPECT_LT(last.train_mae_dbp, 2.0);
}

}  // namespace
