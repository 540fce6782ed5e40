// drl4route: dataset generation, training, evaluation, prediction and
// reward-curve export from one binary.
//
// Exit codes: 0 success, 2 usage or invalid input, 3 training aborted on
// divergence, 4 file or format errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drl4route/agent.hpp"
#include "drl4route/kv.hpp"
#include "drl4route/metrics.hpp"
#include "drl4route/numerics/checkpoint.hpp"
#include "drl4route/synthgen.hpp"
#include "drl4route/trainer.hpp"

using namespace drl4route;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitAbort = 3;
constexpr int kExitIo = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sidecar_path(const std::string& model) { return model + ".meta"; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

void save_model(const numerics::ParameterStore& params, const agent::ModelConfig& cfg, const std::string& path) {
  numerics::save_checkpoint(params, path);
  write_text(sidecar_path(path), cfg.to_kv());
}

// The sidecar, when present, fixes the architecture; otherwise the fallback is used.
numerics::ParameterStore load_model(const std::string& path, agent::ModelConfig& cfg) {
  if (std::filesystem::exists(sidecar_path(path))) cfg = agent::ModelConfig::from_kv(kv::parse_file(sidecar_path(path)));
  auto params = agent::init_params(cfg);
  numerics::assign_checkpoint(params, numerics::load_checkpoint(path));
  return params;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::string config;
  std::optional<std::size_t> workers, samples_per_worker, n_min, n_max;
  std::optional<double> rho;
  std::optional<std::uint64_t> seed;
};

int run_generate(const GenerateArgs& a) {
  auto cfg = a.config.empty() ? synthgen::GenConfig() : synthgen::GenConfig::from_kv(kv::parse_file(a.config));
  if (a.workers) cfg.workers = *a.workers;
  if (a.samples_per_worker) cfg.samples_per_worker = *a.samples_per_worker;
  if (a.n_min) cfg.n_min = *a.n_min;
  if (a.n_max) cfg.n_max = *a.n_max;
  if (a.rho) cfg.rho = *a.rho;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  const auto data = synthgen::generate_dataset(cfg);
  synthgen::write_dataset(data, a.out);
  double total_n = 0;
  for (const auto& s : data) total_n += static_cast<double>(s.n());
  std::printf("samples=%zu mean_n=%.4f\n", data.size(), total_n / static_cast<double>(data.size()));
  return kExitOk;
}

struct TrainArgs {
  std::string data, val, config, method, out_model, log, init_model;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool pretrain_only = false;
};

int run_train(const TrainArgs& a) {
  auto cfg = a.config.empty() ? trainer::TrainConfig() : trainer::TrainConfig::from_kv(kv::parse_file(a.config));
  if (a.pretrain_only) cfg.method = trainer::Method::kCrossEntropy;
  else if (!a.method.empty()) cfg.method = trainer::parse_method(a.method);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.seed) cfg.seed = *a.seed;

  const bool rl = cfg.method != trainer::Method::kCrossEntropy;
  if (rl && a.init_model.empty())
    throw UsageError("--method " + trainer::to_string(cfg.method) + " needs --init-model (a ce checkpoint)");
  cfg.validate();

  const auto data = synthgen::read_dataset(a.data);
  const auto val = a.val.empty() ? std::vector<Sample>{} : synthgen::read_dataset(a.val);
  auto params = a.init_model.empty() ? agent::init_params(cfg.model) : load_model(a.init_model, cfg.model);

  const std::string log_path = a.log.empty() ? a.out_model + ".log.csv" : a.log;
  trainer::TrainLog log;
  log.method = cfg.method;
  const auto on_epoch = [&](const trainer::EpochRow& r) {
    log.rows.push_back(r);
    std::fprintf(stderr, "%s epoch %zu ce=%.6f reward=%.4f val_lsd=%.4f (%.1fs)\n",
                 trainer::to_string(cfg.method).c_str(), r.epoch, r.loss_ce, r.mean_reward, r.val_lsd,
                 r.wall_seconds);
  };
  try {
    trainer::run_training(data, val, params, cfg, on_epoch);
  } catch (const DivergenceError& e) {
    // params hold the last completed epoch.
    save_model(params, cfg.model, a.out_model);
    log.write_csv(log_path);
    std::fprintf(stderr, "training aborted: %s; last good model written to %s\n", e.what(), a.out_model.c_str());
    return kExitAbort;
  }
  save_model(params, cfg.model, a.out_model);
  log.write_csv(log_path);
  return kExitOk;
}

struct EvaluateArgs {
  std::string data, model, baseline, out;
  std::vector<std::size_t> buckets;
  std::optional<std::size_t> bucket_max;
};

int run_evaluate(const EvaluateArgs& a) {
  if (a.model.empty() == a.baseline.empty()) throw UsageError("give exactly one of --model or --baseline");
  const auto data = synthgen::read_dataset(a.data);
  std::vector<RoutePermutation> preds;
  preds.reserve(data.size());
  if (!a.model.empty()) {
    agent::ModelConfig cfg;
    auto params = load_model(a.model, cfg);
    preds = trainer::predict_all(data, params, cfg);
  } else if (a.baseline == "time-greedy") {
    for (const auto& s : data) preds.push_back(synthgen::baseline_time_greedy(s));
  } else if (a.baseline == "distance-greedy") {
    for (const auto& s : data) preds.push_back(synthgen::baseline_distance_greedy(s));
  } else {
    throw UsageError("unknown baseline '" + a.baseline + "'");
  }

  std::vector<metrics::Bucket> buckets;
  for (auto b : a.buckets) buckets.push_back({b});
  if (a.bucket_max) buckets.push_back({*a.bucket_max});
  if (buckets.empty()) buckets = {metrics::kShortBucket, metrics::kFullBucket};

  std::string csv = metrics::MetricReport::csv_header() + "\n";
  for (const auto& b : buckets) csv += metrics::evaluate_dataset(data, preds, b).csv_row() + "\n";
  if (a.out.empty()) std::cout << csv;
  else write_text(a.out, csv);
  return kExitOk;
}

struct PredictArgs {
  std::string model, data, out;
};

int run_predict(const PredictArgs& a) {
  agent::ModelConfig cfg;
  auto params = load_model(a.model, cfg);
  const auto data = synthgen::read_dataset(a.data);
  std::string text;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto route = agent::predict(data[i], params, cfg);
    if (!is_permutation_of_n(route.order, data[i].n()))
      throw std::logic_error("decoder produced an invalid route for sample " + std::to_string(i));
    text += std::to_string(i);
    for (TaskId id : route.order) text += ' ' + std::to_string(id);
    text += '\n';
  }
  write_text(a.out, text);
  return kExitOk;
}

struct RewardCurveArgs {
  std::vector<std::string> logs;
  std::string out;
};

// Each --log is either METHOD=PATH or a bare path labelled by its file name
// up to the first dot (gae.bin.log.csv -> gae).
int run_reward_curve(const RewardCurveArgs& a) {
  if (a.logs.empty()) throw UsageError("reward-curve needs at least one --log");
  std::string csv = "method,epoch,mean_reward\n";
  for (const auto& entry : a.logs) {
    std::string label, path = entry;
    if (const auto eq = entry.find('='); eq != std::string::npos && eq > 0) {
      label = entry.substr(0, eq);
      path = entry.substr(eq + 1);
    } else {
      label = std::filesystem::path(entry).filename().string();
      label = label.substr(0, label.find('.'));
    }
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::pair<std::size_t, double>> rows;
    try {
      rows = trainer::read_reward_column(f);
    } catch (const FormatError& e) {
      throw FormatError(path + ":" + std::to_string(e.location()) + ": " + e.what(), e.location());
    }
    for (const auto& [epoch, reward] : rows)
      csv += label + "," + std::to_string(epoch) + "," + trainer::TrainLog::num(reward) + "\n";
  }
  write_text(a.out, csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Route prediction with policy-gradient training"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("--out", gen.out, "Output dataset (JSON lines)")->required();
  generate->add_option("--config", gen.config, "Generation config (key=value)");
  generate->add_option("--workers", gen.workers);
  generate->add_option("--samples-per-worker", gen.samples_per_worker);
  generate->add_option("--n-min", gen.n_min);
  generate->add_option("--n-max", gen.n_max);
  generate->add_option("--rho", gen.rho);
  generate->add_option("--seed", gen.seed);

  TrainArgs tr;
  const auto add_train_flags = [&tr](CLI::App* cmd, bool with_method) {
    cmd->add_option("--data", tr.data, "Training dataset")->required();
    cmd->add_option("--val", tr.val, "Validation dataset");
    cmd->add_option("--config", tr.config, "Training config (key=value)");
    if (with_method) {
      cmd->add_option("--method", tr.method)->check(CLI::IsMember({"ce", "reinforce", "ac", "gae"}));
      cmd->add_option("--init-model", tr.init_model, "Pretrained ce checkpoint");
    }
    cmd->add_option("--out-model", tr.out_model, "Checkpoint to write")->required();
    cmd->add_option("--log", tr.log, "TrainLog CSV (default: <out-model>.log.csv)");
    cmd->add_option("--epochs", tr.epochs);
    cmd->add_option("--seed", tr.seed);
  };
  auto* pretrain = app.add_subcommand("pretrain", "Cross-entropy pretraining");
  add_train_flags(pretrain, false);
  auto* train = app.add_subcommand("train", "Train with ce, reinforce, ac or gae");
  add_train_flags(train, true);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a model or baseline per length bucket");
  evaluate->add_option("--data", ev.data)->required();
  evaluate->add_option("--model", ev.model);
  evaluate->add_option("--baseline", ev.baseline)->check(CLI::IsMember({"time-greedy", "distance-greedy"}));
  evaluate->add_option("--bucket", ev.buckets, "11 and/or 25 (default both)")->check(CLI::IsMember({11, 25}));
  evaluate->add_option("--bucket-max", ev.bucket_max, "Extra bucket (0,N]")->check(CLI::Range(1, 25));
  evaluate->add_option("--out", ev.out, "CSV output (default stdout)");

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Greedy routes, one line per sample");
  predict->add_option("--model", pr.model)->required();
  predict->add_option("--data", pr.data)->required();
  predict->add_option("--out", pr.out)->required();

  RewardCurveArgs rc;
  auto* curve = app.add_subcommand("reward-curve", "Merge TrainLog reward columns into long format");
  curve->add_option("--log", rc.logs, "METHOD=PATH or PATH");
  curve->add_option("--out", rc.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return run_generate(gen);
    if (pretrain->parsed()) {
      tr.pretrain_only = true;
      return run_train(tr);
    }
    if (train->parsed()) return run_train(tr);
    if (evaluate->parsed()) return run_evaluate(ev);
    if (predict->parsed()) return run_predict(pr);
    if (curve->parsed()) return run_reward_curve(rc);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const InputError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return kExitAbort;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }
  return kExitUsage;
}
