#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "usad/config.hpp"
#include "usad/data.hpp"
#include "usad/denoiser.hpp"
#include "usad/losses.hpp"
#include "usad/metrics.hpp"
#include "usad/stats.hpp"
#include "usad/usad_net.hpp"

namespace usad::pipeline {

struct RunPaths {
  std::string out_dir;

  std::string resolved_cfg() const { return out_dir + "/resolved.cfg"; }
  std::string windows_csv() const { return out_dir + "/windows.csv"; }
  std::string diffusion_ckpt() const { return out_dir + "/diffusion.usad"; }
  std::string diffusion_trace() const { return out_dir + "/diffusion_loss.csv"; }
  std::string synthetic_csv() const { return out_dir + "/synthetic.csv"; }
  std::string pretrain_ckpt() const { return out_dir + "/classifier_init.usad"; }
  std::string final_ckpt() const { return out_dir + "/classifier_final.usad"; }
  std::string train_log() const { return out_dir + "/train_log.csv"; }
  std::string weights_log() const { return out_dir + "/loss_weights.csv"; }
  std::string metrics_csv() const { return out_dir + "/metrics.csv"; }
  std::string radar_csv() const { return out_dir + "/radar.csv"; }
  std::string ablation_csv() const { return out_dir + "/ablation.csv"; }
};

// Windowed, split and train-normalized dataset with cached conditioning.
struct PreparedData {
  data::Splits splits;
  std::vector<std::string> label_names;
  int n_classes = 0;
  int window_len = 0;
  int channels = 0;
  std::uint64_t train_digest = 0;
  std::vector<double> norm_mean, norm_std;  // per channel, train statistics
};

PreparedData prepare_data(const cfg::Config& config);

net::BranchConfig branch_config_from(const cfg::Config& config, int n_classes, int in_channels);

// ---------------------------------------------------------------------------
// Classifier wrapper (both supported architectures behind one surface)

class Classifier {
 public:
  enum class Arch { kUsad, kPretrain };

  Classifier() = default;
  Classifier(Arch arch, const net::BranchConfig& cfg, Rng& rng);

  TensorD forward(const TensorD& x, const nn::ForwardCtx& ctx = {}) const;
  nn::ParamList<double> parameters() const;
  Arch arch() const { return arch_; }
  const net::BranchConfig& branch_config() const { return cfg_; }

 private:
  Arch arch_ = Arch::kUsad;
  net::BranchConfig cfg_;
  net::UsadNet<double> usad_;
  net::PretrainClassifier<double> small_;
};

TensorD sample_input(const data::SequenceSample& s);

// ---------------------------------------------------------------------------
// Stage entry points (each reads/writes the artifacts named in RunPaths)

struct StageResult {
  std::string checkpoint;
  std::vector<std::string> log_lines;
};

// Stage 1: condition prototypes + denoiser training on the real train split.
StageResult stage1_train_diffusion(const cfg::Config& config);

// Synthesis only: sample pretrain.M sequences from the stage-1 checkpoint and
// write them to synthetic.csv.
StageResult synth_dataset(const cfg::Config& config);

// Stage 2: class-balanced synthesis from the stage-1 checkpoint, then
// classifier pretraining on synthetic data only (skipped when pretrain.M=0).
StageResult stage2_pretrain_classifier(const cfg::Config& config);

// Stage 3: fine-tune on real data with the adaptive composite loss; evaluates
// the test split and emits metrics.
struct FinetuneResult {
  StageResult stage;
  metrics::EvalRow test_row;
  std::vector<double> per_class_recall;
};
FinetuneResult stage3_finetune(const cfg::Config& config);

metrics::EvalRow evaluate_checkpoint(const cfg::Config& config, const std::string& ckpt_path,
                                     const std::string& split_name = "test");

// Full grid over the requested toggles; returns the merged CSV text.
std::string run_ablation(const cfg::Config& config, const std::vector<std::string>& toggles);

// ---------------------------------------------------------------------------
// Checkpoint helpers shared with the CLI

void save_classifier(const std::string& path, const Classifier& clf,
                     const PreparedData& prepared, const cfg::Config& config);
Classifier load_classifier(const std::string& path, const cfg::Config& config, int n_classes,
                           int in_channels);
std::string checkpoint_data_hash(const std::string& path);

}  // namespace usad::pipeline
