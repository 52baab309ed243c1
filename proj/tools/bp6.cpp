// Command-line front end: preprocess, synth, train, eval, denoise.
// Exit codes: 0 success, 2 usage/schema/config, 3 data/numeric, 4 training abort.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "bp6/checkpoint.hpp"
#include "bp6/clinical.hpp"
#include "bp6/config.hpp"
#include "bp6/dataset.hpp"
#include "bp6/denoise.hpp"
#include "bp6/store.hpp"
#include "bp6/synth.hpp"
#include "bp6/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitAbort = 4;

void log(const std::string& msg) { std::cerr << "bp6: " << msg << '\n'; }

bp6::RunConfig load_config(const std::string& path) {
  return path.empty() ? bp6::RunConfig{} : bp6::load_run_config(path);
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw bp6::Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw bp6::Error("cannot create " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

struct PreprocessArgs {
  std::string input_dir, annotations, out, config;
  std::optional<std::uint64_t> seed;
};

int cmd_preprocess(const PreprocessArgs& a) {
  bp6::RunConfig cfg = load_config(a.config);
  const std::uint64_t seed = bp6::resolve_seed(a.seed, cfg.seed);
  const std::string input_dir = a.input_dir.empty() ? cfg.input_dir : a.input_dir;
  const std::string ann_path = a.annotations.empty() ? cfg.annotations : a.annotations;
  if (input_dir.empty() || ann_path.empty()) throw bp6::ConfigError("--input-dir and --annotations are required");
  if (!fs::is_directory(input_dir)) throw bp6::SchemaError("input directory " + input_dir + " does not exist");

  const auto annotations = bp6::data::read_annotations(ann_path, cfg.gate);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input_dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    if (fs::exists(ann_path) && fs::equivalent(e.path(), ann_path)) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw bp6::SchemaError("no recording files (*.csv) in " + input_dir);

  std::vector<bp6::data::SixModalSample> samples;
  for (const auto& f : files) {
    const auto rec = bp6::data::ingest_recording(f);
    const auto windows = bp6::data::window_recording(rec, cfg.preprocess.window_samples);
    for (const auto& w : windows.warnings) log("warning: " + w);
    for (const auto& w : windows.windows) samples.push_back(bp6::data::preprocess_window(w, cfg.preprocess));
    log(f.filename().string() + ": " + std::to_string(windows.windows.size()) + " windows, " +
        std::to_string(windows.discarded) + " trailing samples dropped");
  }
  bp6::data::assign_labels(samples, annotations, cfg.gate);
  ensure_parent(a.out);
  bp6::data::save_store(samples, a.out);
  bp6::data::write_sidecar(a.out, bp6::data::store_sidecar(samples, seed, cfg.hash()));
  log("wrote " + std::to_string(samples.size()) + " samples to " + a.out);
  return 0;
}

struct SynthArgs {
  std::size_t n = 64;
  std::string out, config;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  const bp6::RunConfig cfg = load_config(a.config);
  const std::uint64_t seed = bp6::resolve_seed(a.seed, cfg.seed);
  const auto set = bp6::data::synth_generate(a.n, seed);
  ensure_parent(a.out);
  bp6::data::save_store(set.samples, a.out);
  auto side = bp6::data::store_sidecar(set.samples, seed, cfg.hash());
  side["synthetic"] = true;
  bp6::data::write_sidecar(a.out, side);
  log("wrote " + std::to_string(set.samples.size()) + " synthetic samples to " + a.out);
  return 0;
}

struct TrainArgs {
  std::string store, config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  bp6::RunConfig cfg = load_config(a.config);
  cfg.seed = bp6::resolve_seed(a.seed, cfg.seed);
  cfg.train.seed = cfg.seed;
  const std::string store = a.store.empty() ? cfg.store : a.store;
  if (store.empty()) throw bp6::ConfigError("--store is required");
  const fs::path out = a.out.empty() ? fs::path(cfg.out_dir) : fs::path(a.out);
  ensure_dir(out);

  const auto samples = bp6::data::load_store(store);
  const auto split = bp6::data::split_dataset(samples, cfg.seed, cfg.split_by_subject);
  log("split " + std::to_string(split.train.size()) + "/" + std::to_string(split.validation.size()) + "/" +
      std::to_string(split.test.size()) + " (seed " + std::to_string(cfg.seed) + ", config " + cfg.hash() + ")");
  std::ofstream(out / "config.cfg") << format_run_config(cfg);

  bp6::nn::BpModel model(cfg.model, cfg.seed);
  std::ofstream metrics(out / "metrics.csv");
  metrics << bp6::train::metrics_csv_header() << '\n';
  bp6::train::FitResult res;
  try {
    res = bp6::train::fit(model, samples, split, cfg.train, cfg.loss, [&](const bp6::train::EpochMetrics& m) {
      metrics << bp6::train::metrics_csv_row(m) << '\n' << std::flush;
      log("epoch " + std::to_string(m.epoch) + " total " + std::to_string(m.train_total) + " val MAE " +
          std::to_string(m.val_mae_sbp) + "/" + std::to_string(m.val_mae_dbp));
      return true;
    });
  } catch (const bp6::train::TrainingAborted& e) {
    write_json(out / "abort.json", {{"epoch", e.epoch},
                                    {"batch", e.batch},
                                    {"mse", std::to_string(e.mse)},
                                    {"contrastive", std::to_string(e.contrastive)},
                                    {"seed", cfg.seed},
                                    {"config_hash", cfg.hash()}});
    throw;
  }
  bp6::train::restore(model, res.best_state);
  const std::map<std::string, std::string> meta{
      {"seed", std::to_string(cfg.seed)},
      {"config_hash", cfg.hash()},
      {"split_by_subject", cfg.split_by_subject ? "true" : "false"},
      {"best_epoch", std::to_string(res.best_epoch)},
  };
  bp6::save_checkpoint(bp6::make_checkpoint(model, meta), out / "best.bp6c");
  write_json(out / "run.json", {{"seed", cfg.seed},
                                {"config_hash", cfg.hash()},
                                {"store", store},
                                {"epochs_run", res.log.size()},
                                {"best_epoch", res.best_epoch},
                                {"best_val_mae", res.best_val_mae},
                                {"split", {{"train", split.train.size()},
                                           {"validation", split.validation.size()},
                                           {"test", split.test.size()}}}});
  log("best epoch " + std::to_string(res.best_epoch) + ", checkpoint " + (out / "best.bp6c").string());
  return 0;
}

struct EvalArgs {
  std::string store, checkpoint, out, config, subset = "test";
};

int cmd_eval(const EvalArgs& a) {
  const auto ck = bp6::load_checkpoint(a.checkpoint);
  std::unique_ptr<bp6::nn::BpModel> model;
  std::string config_hash = ck.meta.count("config_hash") ? ck.meta.at("config_hash") : "";
  if (!a.config.empty()) {
    const bp6::RunConfig cfg = bp6::load_run_config(a.config);
    model = std::make_unique<bp6::nn::BpModel>(cfg.model, 0);
    bp6::apply_checkpoint(ck, *model);
  } else {
    model = bp6::model_from_checkpoint(ck);
  }
  const std::uint64_t seed = std::stoull(ck.meta.count("seed") ? ck.meta.at("seed") : "0");
  const bool by_subject = ck.meta.count("split_by_subject") && ck.meta.at("split_by_subject") == "true";

  const auto samples = bp6::data::load_store(a.store);
  std::vector<std::size_t> idx;
  if (a.subset == "all") {
    idx.resize(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    idx = bp6::data::split_dataset(samples, seed, by_subject).test;
  }
  const auto pred = bp6::train::predict(*model, samples, idx);
  std::vector<bp6::clinical::SampleRecord> recs;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = samples[idx[i]];
    recs.push_back({s.provenance.subject_id, s.provenance.motion_state, s.provenance.window_index, pred[i][0],
                    static_cast<double>(s.sbp), pred[i][1], static_cast<double>(s.dbp)});
  }
  const json j = bp6::clinical::export_report(
      recs, a.out,
      {{"seed", seed}, {"config_hash", config_hash}, {"checkpoint", a.checkpoint}, {"store", a.store}, {"subset", a.subset}});
  log("SBP MAE " + std::to_string(j["sbp"]["mae"].get<double>()) + ", DBP MAE " +
      std::to_string(j["dbp"]["mae"].get<double>()) + " over " + std::to_string(idx.size()) + " samples");
  return 0;
}

struct DenoiseArgs {
  std::string in, out, channel_type, config;
  double fs = 100.0;
  std::optional<std::uint64_t> seed;
};

int cmd_denoise(const DenoiseArgs& a) {
  const bp6::RunConfig cfg = load_config(a.config);
  const std::uint64_t seed = bp6::resolve_seed(a.seed, cfg.seed);
  std::ifstream in(a.in);
  if (!in) throw bp6::SchemaError("cannot open " + a.in);
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = bp6::data::detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    double v = 0.0;
    if (!bp6::data::detail::parse_double(t, v)) {
      throw bp6::ParseError(a.in + ":" + std::to_string(line_no) + ": expected one number per line");
    }
    values.push_back(v);
  }
  const bp6::dsp::Segment seg{values, a.fs, a.channel_type};
  const auto outseg = a.channel_type == "ecg" ? bp6::denoise::denoise_ecg(seg, cfg.preprocess.ecg)
                                              : bp6::denoise::denoise_ppg(seg, cfg.preprocess.ppg);
  ensure_parent(a.out);
  std::ofstream out(a.out);
  if (!out) throw bp6::Error("cannot write " + a.out);
  out << "# bp6 denoise channel=" << a.channel_type << " fs=" << a.fs << " seed=" << seed
      << " config_hash=" << cfg.hash() << '\n';
  out.precision(17);
  for (double v : outseg.values) out << v << '\n';
  log("denoised " + std::to_string(values.size()) + " samples");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Six-modal cuffless blood-pressure pipeline"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* sp = app.add_subcommand("preprocess", "Ingest recordings and annotations into a segment store");
  sp->add_option("--input-dir", pre.input_dir, "Directory of <subject>_<state>.csv recordings");
  sp->add_option("--annotations", pre.annotations, "Annotation table");
  sp->add_option("--out", pre.out, "Output store path")->required();
  sp->add_option("--config", pre.config, "Run configuration file");
  sp->add_option("--seed", pre.seed, "Seed recorded with the store");

  SynthArgs syn;
  auto* ss = app.add_subcommand("synth", "Generate a synthetic segment store");
  ss->add_option("--n", syn.n, "Number of samples")->check(CLI::PositiveNumber);
  ss->add_option("--seed", syn.seed, "Generator seed");
  ss->add_option("--out", syn.out, "Output store path")->required();
  ss->add_option("--config", syn.config, "Run configuration file");

  TrainArgs tr;
  auto* st = app.add_subcommand("train", "Train on a segment store");
  st->add_option("--store", tr.store, "Segment store");
  st->add_option("--config", tr.config, "Run configuration file");
  st->add_option("--out", tr.out, "Output directory");
  st->add_option("--seed", tr.seed, "Seed for initialization, split, shuffling, dropout and negatives");

  EvalArgs ev;
  auto* se = app.add_subcommand("eval", "Evaluate a checkpoint and export clinical reports");
  se->add_option("--store", ev.store, "Segment store")->required();
  se->add_option("--checkpoint", ev.checkpoint, "Checkpoint written by train")->required();
  se->add_option("--out", ev.out, "Report directory")->required();
  se->add_option("--config", ev.config, "Run configuration; its model section must match the checkpoint");
  se->add_option("--split", ev.subset, "Samples to evaluate")->check(CLI::IsMember({"test", "all"}));

  DenoiseArgs dn;
  auto* sd = app.add_subcommand("denoise", "Denoise a single-column signal file");
  sd->add_option("--in", dn.in, "Input file, one value per line")->required();
  sd->add_option("--channel-type", dn.channel_type, "ecg or ppg")->required()->check(CLI::IsMember({"ecg", "ppg"}));
  sd->add_option("--out", dn.out, "Output file")->required();
  sd->add_option("--fs", dn.fs, "Sampling rate in Hz")->check(CLI::PositiveNumber);
  sd->add_option("--config", dn.config, "Run configuration file");
  sd->add_option("--seed", dn.seed, "Seed recorded in the output header");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sp) return cmd_preprocess(pre);
    if (*ss) return cmd_synth(syn);
    if (*st) return cmd_train(tr);
    if (*se) return cmd_eval(ev);
    if (*sd) return cmd_denoise(dn);
  } catch (const bp6::train::TrainingAborted& e) {
    log(std::string("training aborted: ") + e.what());
    return kExitAbort;
  } catch (const bp6::ConfigMismatch& e) {
    log(std::string("error: ") + e.what());
    return kExitUsage;
  } catch (const bp6::ConfigError& e) {
    log(std::string("config error: ") + e.what());
    return kExitUsage;
  } catch (const bp6::SchemaError& e) {
    log(std::string("schema error: ") + e.what());
    return kExitUsage;
  } catch (const bp6::ParseError& e) {
    log(std::string("parse error: ") + e.what());
    return kExitUsage;
  } catch (const bp6::FormatError& e) {
    log(std::string("format error: ") + e.what());
    return kExitUsage;
  } catch (const bp6::InvalidArgument& e) {
    log(std::string("invalid argument: ") + e.what());
    return kExitUsage;
  } catch (const bp6::ContractError& e) {
    log(std::string("error: ") + e.what());
    return kExitUsage;
  } catch (const bp6::DataError& e) {
    log(std::string("data error: ") + e.what());
    return kExitData;
  } catch (const bp6::NumericError& e) {
    log(std::string("numeric error: ") + e.what());
    return kExitData;
  } catch (const bp6::CorruptStoreError& e) {
    log(std::string("corrupt file: ") + e.what());
    return kExitData;
  } catch (const bp6::ShapeError& e) {
    log(std::string("shape error: ") + e.what());
    return kExitData;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
  return kExitUsage;
}
