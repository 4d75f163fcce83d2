#include "usad/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "usad/bench.hpp"
#include "usad/checkpoint.hpp"
#include "usad/config.hpp"
#include "usad/data.hpp"
#include "usad/metrics.hpp"
#include "usad/pipeline.hpp"

namespace usad::cli {

namespace {

namespace fs = std::filesystem;

cfg::Config resolve_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  cfg::Config config =
      config_path.empty() ? cfg::Config() : cfg::Config::from_file(config_path);
  for (const auto& o : overrides) config.apply_override(o);
  // environment seed is the override of last resort
  if (!config.has("seed")) {
    if (const char* env = std::getenv("USAD_SEED"); env != nullptr) {
      config.set("seed", env);
    }
  }
  config.reject_unknown_keys(cfg::known_keys());
  return config;
}

int run_prepare(const cfg::Config& config) {
  auto prepared = pipeline::prepare_data(config);
  pipeline::RunPaths paths;
  paths.out_dir = config.get_string("out.dir", "runs/default");
  fs::create_directories(paths.out_dir);
  {
    std::ofstream out(paths.resolved_cfg());
    out << config.resolved_text();
  }
  std::vector<data::SequenceSample> all = prepared.splits.train;
  all.insert(all.end(), prepared.splits.val.begin(), prepared.splits.val.end());
  all.insert(all.end(), prepared.splits.test.begin(), prepared.splits.test.end());
  data::write_windows_csv(paths.windows_csv(), all, prepared.label_names);
  const auto report = data::imbalance_report(all);
  std::cerr << "prepared " << all.size() << " windows (" << prepared.splits.train.size()
            << " train), classes " << report.counts.size() << ", max/min ratio "
            << report.max_min_ratio << ", label entropy " << report.entropy << "\n";
  return 0;
}

int run_evaluate(const cfg::Config& config, const std::string& checkpoint,
                 const std::string& split) {
  const auto row = pipeline::evaluate_checkpoint(config, checkpoint, split);
  std::cout << metrics::metrics_csv_header() << "\n" << metrics::metrics_csv_row(row) << "\n";
  return 0;
}

int run_inspect(const std::string& path) {
  const io::Container c = io::Container::load(path);
  long long total_params = 0;
  std::cout << "container: " << path << "\n";
  for (const auto& e : c.entries()) {
    std::cout << "  " << e.name << "  dtype="
              << (e.dtype == io::DType::kU8 ? "u8" : (e.dtype == io::DType::kF32 ? "f32" : "f64"))
              << " shape=[";
    for (std::size_t i = 0; i < e.shape.size(); ++i) {
      if (i) std::cout << 'x';
      std::cout << e.shape[i];
    }
    std::cout << "]\n";
    if (e.dtype != io::DType::kU8 && e.name.rfind("meta/", 0) != 0 &&
        e.name.rfind("norm/", 0) != 0 && e.name.rfind("proto/", 0) != 0) {
      total_params += static_cast<long long>(e.element_count());
    }
  }
  std::cout << "total parameters: " << total_params << "\n";
  if (const auto* hash = c.find("meta/data_hash")) {
    std::cout << "data hash: " << hash->as_text() << "\n";
  }
  if (const auto* config = c.find("meta/config")) {
    std::cout << "config:\n";
    std::istringstream is(config->as_text());
    std::string line;
    while (std::getline(is, line)) std::cout << "  " << line << "\n";
  }
  return 0;
}

class CheckpointModel final : public bench::InferenceModel {
 public:
  CheckpointModel(pipeline::Classifier clf, std::string name, const data::SequenceSample& probe)
      : clf_(std::move(clf)), name_(std::move(name)) {
    param_count_ = nn::count_parameters(clf_.parameters());
    auto& meter = ActivationMeter::instance();
    meter.begin();
    clf_.forward(pipeline::sample_input(probe));
    memory_bytes_ = param_count_ * static_cast<long long>(sizeof(double)) + meter.end();
  }

  std::string name() const override { return name_; }
  void infer(const data::SequenceSample& w) override {
    clf_.forward(pipeline::sample_input(w));
  }
  long long param_count() const override { return param_count_; }
  long long memory_bytes() const override { return memory_bytes_; }

 private:
  pipeline::Classifier clf_;
  std::string name_;
  long long param_count_ = 0;
  long long memory_bytes_ = 0;
};

int run_bench(const cfg::Config& config, const std::string& model_path,
              const std::string& dataset_path, double segment_seconds, int reps, int warmup,
              const std::string& out_path) {
  std::vector<data::SequenceSample> stream;
  if (!dataset_path.empty()) {
    stream = data::read_windows_csv(dataset_path);
  } else {
    auto prepared = pipeline::prepare_data(config);
    stream = prepared.splits.test.empty() ? prepared.splits.train : prepared.splits.test;
  }
  if (stream.empty()) throw std::runtime_error("bench: empty window stream");

  const int n_classes = 1 + [&] {
    int top = 0;
    for (const auto& s : stream) top = std::max(top, s.y);
    return top;
  }();
  auto clf = pipeline::load_classifier(model_path, config, n_classes,
                                       5 * static_cast<int>(stream.front().channels()));
  CheckpointModel model(std::move(clf), fs::path(model_path).stem().string(), stream.front());

  bench::LatencyBudget budget{segment_seconds};
  const auto report = bench::measure_latency(model, stream, budget, reps, warmup);
  const double overhead = bench::harness_overhead_ms(stream, std::min(reps, 100), warmup);

  if (!out_path.empty()) bench::emit_report(report, out_path);
  std::cout << bench::report_csv(report);
  std::cerr << "model " << report.model_name << ": mean " << report.mean_ms << " ms, p95 "
            << report.p95_ms << " ms, budget " << report.budget_ms << " ms => "
            << (report.pass ? "pass" : "fail") << " (harness overhead " << overhead << " ms)\n";
  return 0;
}

}  // namespace

int dispatch(std::vector<std::string> args) {
  CLI::App app{"statistics-conditioned diffusion augmentation + split-attention HAR toolkit",
               "usad"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "flat key=value config file")
      ->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "config override key=value (repeatable)");

  auto* prepare = app.add_subcommand("prepare", "window, split and export the dataset");
  auto* train_diffusion =
      app.add_subcommand("train-diffusion", "stage 1: train the conditional denoiser");
  auto* synth = app.add_subcommand("synth", "sample a synthetic dataset from a stage-1 checkpoint");
  auto* pretrain =
      app.add_subcommand("pretrain", "stage 2: synthesize and pretrain the classifier");
  auto* finetune = app.add_subcommand("finetune", "stage 3: fine-tune on real data and evaluate");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a classifier checkpoint on a split");
  auto* ablate = app.add_subcommand("ablate", "run a toggle grid and merge the results");
  auto* bench_cmd = app.add_subcommand("bench", "latency and footprint harness");
  auto* inspect = app.add_subcommand("inspect", "print a checkpoint's contents");

  std::string eval_checkpoint, eval_split = "test";
  evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate")->required();
  evaluate->add_option("--split", eval_split, "train|val|test");

  std::string toggles_arg;
  ablate->add_option("--toggles", toggles_arg, "comma list of spatial_attn,temporal_attn,adaptive_loss,augmentation");

  std::string bench_model, bench_dataset, bench_out;
  double segment_seconds = 4.0;
  int reps = 100, warmup = 10;
  bench_cmd->add_option("--model", bench_model, "classifier checkpoint")->required();
  bench_cmd->add_option("--dataset", bench_dataset, "windowed dataset CSV");
  bench_cmd->add_option("--segment-seconds", segment_seconds, "segment duration in seconds");
  bench_cmd->add_option("--reps", reps, "timed repetitions");
  bench_cmd->add_option("--warmup", warmup, "untimed warmup runs");
  bench_cmd->add_option("--out", bench_out, "report CSV path");

  std::string inspect_path;
  inspect->add_option("checkpoint", inspect_path, "container path")->required();

  std::vector<const char*> argv;
  argv.push_back("usad");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (inspect->parsed()) return run_inspect(inspect_path);

    const cfg::Config config = resolve_config(config_path, overrides);
    if (prepare->parsed()) return run_prepare(config);
    if (train_diffusion->parsed()) {
      const auto res = pipeline::stage1_train_diffusion(config);
      for (const auto& l : res.log_lines) std::cerr << l << "\n";
      return 0;
    }
    if (synth->parsed() || pretrain->parsed()) {
      const auto res = pipeline::stage2_pretrain_classifier(config);
      for (const auto& l : res.log_lines) std::cerr << l << "\n";
      return 0;
    }
    if (finetune->parsed()) {
      const auto res = pipeline::stage3_finetune(config);
      for (const auto& l : res.stage.log_lines) std::cerr << l << "\n";
      std::cout << metrics::metrics_csv_header() << "\n"
                << metrics::metrics_csv_row(res.test_row) << "\n";
      return 0;
    }
    if (evaluate->parsed()) return run_evaluate(config, eval_checkpoint, eval_split);
    if (ablate->parsed()) {
      std::vector<std::string> toggles;
      std::istringstream is(toggles_arg);
      std::string piece;
      while (std::getline(is, piece, ',')) {
        if (!piece.empty()) toggles.push_back(piece);
      }
      std::cout << pipeline::run_ablation(config, toggles);
      return 0;
    }
    if (bench_cmd->parsed()) {
      return run_bench(config, bench_model, bench_dataset, segment_seconds, reps, warmup,
                       bench_out);
    }
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace usad::cli
