#include "usad/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "usad/checkpoint.hpp"
#include "usad/diffusion.hpp"
#include "usad/optim.hpp"
#include "usad/schedule.hpp"
#include "usad/tape.hpp"

namespace usad::pipeline {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kSeedPrepare = 11;
constexpr std::uint64_t kSeedDiffusion = 21;
constexpr std::uint64_t kSeedSynthesis = 31;
constexpr std::uint64_t kSeedPretrain = 41;
constexpr std::uint64_t kSeedFinetune = 51;
constexpr std::uint64_t kSeedInit = 61;

std::uint64_t root_seed(const cfg::Config& config) {
  if (!config.has("seed")) throw std::runtime_error("config is missing mandatory key 'seed'");
  return config.get_u64("seed", 0);
}

RunPaths paths_of(const cfg::Config& config) {
  RunPaths p;
  p.out_dir = config.get_string("out.dir", "runs/default");
  return p;
}

void ensure_out_dir(const RunPaths& paths, const cfg::Config& config) {
  fs::create_directories(paths.out_dir);
  std::ofstream out(paths.resolved_cfg());
  out << config.resolved_text();
}

std::string hex_u64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

net::BranchConfig branch_config_from(const cfg::Config& config, int n_classes, int in_channels) {
  net::BranchConfig bc;
  bc.cardinality = config.get_int("net.K", 2);
  bc.radix = config.get_int("net.R", 2);
  bc.channels = config.get_int("net.channels", 32);
  bc.kernel_sizes = config.get_ints("net.kernels", {3, 5, 7});
  bc.dropout = config.get_double("net.dropout", 0.3);
  bc.spatial_attention = config.get_bool("net.spatial_attention", true);
  bc.temporal_attention = config.get_bool("net.temporal_attention", true);
  bc.spatial_site = config.get_string("net.spatial_site", "splits") == "fused"
                        ? net::BranchConfig::SpatialSite::kFused
                        : net::BranchConfig::SpatialSite::kSplits;
  bc.n_classes = n_classes;
  bc.in_channels = in_channels;
  return bc;
}

namespace {

losses::CompositeLossState loss_state_of(const cfg::Config& config) {
  losses::CompositeLossState st;
  const auto omega = config.get_doubles("loss.omega", {0.33, 0.33, 0.34});
  if (omega.size() != 3) throw std::runtime_error("loss.omega needs three values");
  st.omega0 = omega[0];
  st.omega1 = omega[1];
  st.omega2 = omega[2];
  st.tau = config.get_double("loss.tau", 0.5);
  st.temperature = config.get_double("loss.temperature", 1.0);
  st.w_min = config.get_double("loss.w_min", 0.1);
  st.w_max = config.get_double("loss.w_max", 0.8);
  return st;
}

}  // namespace

// ---------------------------------------------------------------------------
// Data preparation

PreparedData prepare_data(const cfg::Config& config) {
  const std::uint64_t seed = root_seed(config);
  std::vector<data::SequenceSample> samples;
  std::vector<std::string> label_names;

  if (config.get_bool("data.toy", !config.has("data.path"))) {
    data::ToyConfig toy = data::default_toy_config(
        config.get_int("data.toy.classes", 2), config.get_int("data.toy.length", 32),
        config.get_int("data.toy.per_class", 50), Rng(seed).child(kSeedPrepare).root_seed());
    toy.noise = config.get_double("data.toy.noise", 0.25);
    toy.imbalance = config.get_double("data.toy.imbalance", 1.0);
    const auto amps = config.get_doubles("data.toy.amplitudes", {});
    const auto freqs = config.get_doubles("data.toy.frequencies", {});
    const auto offs = config.get_doubles("data.toy.offsets", {});
    for (std::size_t k = 0; k < toy.classes.size(); ++k) {
      if (k < amps.size()) toy.classes[k].amplitude = amps[k];
      if (k < freqs.size()) toy.classes[k].frequency = freqs[k];
      if (k < offs.size()) toy.classes[k].offset = offs[k];
    }
    samples = data::make_toy_dataset(toy);
    for (std::size_t k = 0; k < toy.classes.size(); ++k) {
      label_names.push_back("class" + std::to_string(k));
    }
  } else {
    data::CsvSchema schema;
    data::RawRecording rec = data::ingest_csv(config.get_string("data.path", ""), schema);
    data::WindowSpec spec;
    spec.window_len = config.get_int("data.window", 90);
    spec.step = config.get_int("data.step", spec.window_len / 2);
    spec.rule = config.get_string("data.label_rule", "majority") == "strict"
                    ? data::LabelRule::kStrict
                    : data::LabelRule::kMajority;
    samples = data::window(rec, spec);
    label_names = rec.label_names;
    const int channel = config.get_int("data.channel", -1);
    if (channel >= 0) {
      for (auto& s : samples) {
        if (channel >= static_cast<int>(s.channels())) {
          throw std::runtime_error("data.channel out of range");
        }
        s.x = {s.x[static_cast<std::size_t>(channel)]};
      }
      data::refresh_condition_vectors(samples);
    }
  }
  if (samples.empty()) throw std::runtime_error("prepare_data: no windows produced");

  const auto ratios_v = config.get_doubles("data.split", {0.7, 0.15, 0.15});
  if (ratios_v.size() != 3) throw std::runtime_error("data.split needs three ratios");
  std::array<double, 3> ratios{ratios_v[0], ratios_v[1], ratios_v[2]};

  PreparedData out;
  out.splits = data::split(std::move(samples), ratios, Rng(seed).child(kSeedPrepare).next_u64(),
                           config.get_bool("data.stratify", true));
  if (out.splits.train.empty()) throw std::runtime_error("prepare_data: empty train split");

  out.label_names = std::move(label_names);
  out.n_classes = static_cast<int>(out.label_names.size());
  out.window_len = static_cast<int>(out.splits.train.front().length());
  out.channels = static_cast<int>(out.splits.train.front().channels());

  // per-channel normalization from train statistics only
  if (config.get_bool("data.normalize", true)) {
    out.norm_mean.assign(static_cast<std::size_t>(out.channels), 0.0);
    out.norm_std.assign(static_cast<std::size_t>(out.channels), 0.0);
    long long n = 0;
    for (const auto& s : out.splits.train) {
      for (int c = 0; c < out.channels; ++c) {
        for (double v : s.x[static_cast<std::size_t>(c)]) out.norm_mean[static_cast<std::size_t>(c)] += v;
      }
      n += static_cast<long long>(s.length());
    }
    for (auto& m : out.norm_mean) m /= static_cast<double>(n);
    for (const auto& s : out.splits.train) {
      for (int c = 0; c < out.channels; ++c) {
        for (double v : s.x[static_cast<std::size_t>(c)]) {
          const double d = v - out.norm_mean[static_cast<std::size_t>(c)];
          out.norm_std[static_cast<std::size_t>(c)] += d * d;
        }
      }
    }
    for (auto& sd : out.norm_std) sd = std::max(std::sqrt(sd / static_cast<double>(n)), 1e-8);
    auto normalize = [&](std::vector<data::SequenceSample>& split) {
      for (auto& s : split) {
        for (int c = 0; c < out.channels; ++c) {
          for (auto& v : s.x[static_cast<std::size_t>(c)]) {
            v = (v - out.norm_mean[static_cast<std::size_t>(c)]) /
                out.norm_std[static_cast<std::size_t>(c)];
          }
        }
      }
      data::refresh_condition_vectors(split);
    };
    normalize(out.splits.train);
    normalize(out.splits.val);
    normalize(out.splits.test);
  } else {
    out.norm_mean.assign(static_cast<std::size_t>(out.channels), 0.0);
    out.norm_std.assign(static_cast<std::size_t>(out.channels), 1.0);
  }

  out.train_digest = data::dataset_digest(out.splits.train);
  return out;
}

// ---------------------------------------------------------------------------
// Classifier wrapper

Classifier::Classifier(Arch arch, const net::BranchConfig& cfg, Rng& rng)
    : arch_(arch), cfg_(cfg) {
  if (arch == Arch::kUsad) {
    usad_ = net::UsadNet<double>(cfg, rng);
  } else {
    small_ = net::PretrainClassifier<double>(cfg.in_channels, cfg.n_classes, rng);
  }
}

TensorD Classifier::forward(const TensorD& x, const nn::ForwardCtx& ctx) const {
  return arch_ == Arch::kUsad ? usad_.forward(x, ctx) : small_.forward(x, ctx);
}

nn::ParamList<double> Classifier::parameters() const {
  return arch_ == Arch::kUsad ? usad_.parameters() : small_.parameters();
}

TensorD sample_input(const data::SequenceSample& s) {
  return net::assemble_input<double>(s.x, s.f);
}

// ---------------------------------------------------------------------------
// Checkpoint plumbing

namespace {

void add_params(io::Container& c, const nn::ParamList<double>& params) {
  for (const auto& p : params) {
    std::vector<std::uint32_t> shape;
    for (int d : p.value.shape()) shape.push_back(static_cast<std::uint32_t>(d));
    c.add_f64(p.name, std::move(shape), p.value.data());
  }
}

void load_params(const io::Container& c, nn::ParamList<double>& params) {
  for (auto& p : params) {
    const auto& e = c.require(p.name);
    const auto values = e.as_f64();
    if (static_cast<std::int64_t>(values.size()) != p.value.numel()) {
      throw std::runtime_error("checkpoint entry '" + p.name + "' has wrong element count");
    }
    std::copy(values.begin(), values.end(), p.value.data().begin());
  }
}

void add_common_meta(io::Container& c, const PreparedData& prepared, const cfg::Config& config) {
  c.add_text("meta/config", config.resolved_text());
  c.add_text("meta/data_hash", hex_u64(prepared.train_digest));
  std::ostringstream labels;
  for (std::size_t i = 0; i < prepared.label_names.size(); ++i) {
    if (i) labels << ';';
    labels << prepared.label_names[i];
  }
  c.add_text("meta/labels", labels.str());
  c.add_f64("norm/mean", {static_cast<std::uint32_t>(prepared.norm_mean.size())},
            prepared.norm_mean);
  c.add_f64("norm/std", {static_cast<std::uint32_t>(prepared.norm_std.size())},
            prepared.norm_std);
}

}  // namespace

void save_classifier(const std::string& path, const Classifier& clf, const PreparedData& prepared,
                     const cfg::Config& config) {
  io::Container c;
  add_params(c, clf.parameters());
  add_common_meta(c, prepared, config);
  c.add_text("meta/arch", clf.arch() == Classifier::Arch::kUsad ? "usad" : "pretrain");
  c.save(path);
}

Classifier load_classifier(const std::string& path, const cfg::Config& config, int n_classes,
                           int in_channels) {
  const io::Container c = io::Container::load(path);
  const cfg::Config saved = cfg::Config::from_string(c.require("meta/config").as_text());
  const std::string arch = c.require("meta/arch").as_text();
  Rng rng(0);  // weights are overwritten below
  Classifier clf(arch == "usad" ? Classifier::Arch::kUsad : Classifier::Arch::kPretrain,
                 branch_config_from(saved, n_classes, in_channels), rng);
  auto params = clf.parameters();
  load_params(c, params);
  (void)config;
  return clf;
}

std::string checkpoint_data_hash(const std::string& path) {
  return io::Container::load(path).require("meta/data_hash").as_text();
}

// ---------------------------------------------------------------------------
// Shared training loop

namespace {

struct TrainOptions {
  std::string stage;
  int epochs = 10;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool composite = false;  // plain cross-entropy otherwise
  bool adaptive = false;
  losses::CompositeLossState state;
  losses::FocalParams focal;
  losses::SmoothingParams smoothing;
  bool cb = false;
  double cb_beta = 0.9;
};

struct TrainLogRow {
  std::string stage;
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = -1.0;
  double w0 = 0.0, w1 = 0.0, w2 = 0.0;
  double wall_ms = 0.0;
};

double split_accuracy(const Classifier& clf, const std::vector<data::SequenceSample>& split) {
  if (split.empty()) return -1.0;
  long correct = 0;
  for (const auto& s : split) {
    auto p = clf.forward(sample_input(s));
    const auto v = p.data();
    const int arg = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    correct += arg == s.y ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

std::vector<TrainLogRow> train_classifier(Classifier& clf,
                                          const std::vector<data::SequenceSample>& train,
                                          const std::vector<data::SequenceSample>* val,
                                          TrainOptions& opt) {
  if (train.empty()) throw std::runtime_error("train_classifier: empty training set");
  auto params = clf.parameters();
  optim::AdamState<double> adam;
  optim::AdamConfig<double> adam_cfg;
  adam_cfg.lr = opt.lr;

  Rng root(opt.seed);
  Rng shuffle_rng = root.child(1);
  Rng dropout_root = root.child(2);

  // inputs are constant across epochs
  std::vector<TensorD> inputs;
  inputs.reserve(train.size());
  for (const auto& s : train) inputs.push_back(sample_input(s));

  losses::ClassBalancedParams cb_params;
  if (opt.cb) {
    cb_params.beta = opt.cb_beta;
    for (const auto& s : train) ++cb_params.counts[s.y];
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<TrainLogRow> log;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    }
    double epoch_loss = 0.0;
    long correct = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
      optim::zero_grads(params);
      Tape tape;
      TensorD batch_loss;
      {
        TapeScope scope(tape);
        std::vector<TensorD> sample_losses;
        std::vector<int> batch_labels;
        for (std::size_t i = start; i < stop; ++i) {
          const auto& s = train[order[i]];
          // per-sample dropout stream: mask depends on (epoch, sample), not
          // on batch order
          Rng drop_rng = dropout_root.child(static_cast<std::uint64_t>(epoch) * train.size() +
                                            order[i]);
          nn::ForwardCtx ctx{true, &drop_rng};
          auto p = clf.forward(inputs[order[i]], ctx);
          const auto pv = p.data();
          const int arg = static_cast<int>(std::max_element(pv.begin(), pv.end()) - pv.begin());
          correct += arg == s.y ? 1 : 0;
          TensorD li = opt.composite
                           ? losses::composite_loss(p, s.y, opt.state, opt.focal, opt.smoothing)
                           : losses::cross_entropy_t(p, s.y);
          sample_losses.push_back(li);
          batch_labels.push_back(s.y);
        }
        if (opt.cb) {
          const auto scales = losses::class_balanced_scales(batch_labels, cb_params);
          for (std::size_t i = 0; i < sample_losses.size(); ++i) {
            sample_losses[i] = ops::mul_scalar(sample_losses[i], scales[i]);
          }
        }
        batch_loss = ops::mul_scalar(ops::add_n(sample_losses),
                                     1.0 / static_cast<double>(sample_losses.size()));
      }
      if (!std::isfinite(batch_loss.item())) {
        throw std::runtime_error(opt.stage + ": non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      tape.backward(batch_loss);
      optim::adam_step(params, adam_cfg, adam);
      epoch_loss += batch_loss.item() * static_cast<double>(stop - start);
    }
    epoch_loss /= static_cast<double>(train.size());
    const double train_acc = static_cast<double>(correct) / static_cast<double>(train.size());

    TrainLogRow row;
    row.stage = opt.stage;
    row.epoch = epoch;
    row.loss = epoch_loss;
    row.train_acc = train_acc;
    row.val_acc = val != nullptr ? split_accuracy(clf, *val) : -1.0;
    if (opt.composite && opt.adaptive) losses::update_weights(opt.state, train_acc);
    row.w0 = opt.state.omega0;
    row.w1 = opt.state.omega1;
    row.w2 = opt.state.omega2;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    log.push_back(row);
  }
  return log;
}

void append_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (fresh) out << "stage,epoch,loss,train_acc,val_acc,omega0,omega1,omega2,wall_ms\n";
  out.precision(9);
  for (const auto& r : rows) {
    out << r.stage << ',' << r.epoch << ',' << r.loss << ',' << r.train_acc << ',' << r.val_acc
        << ',' << r.w0 << ',' << r.w1 << ',' << r.w2 << ',' << r.wall_ms << "\n";
  }
}

void write_weights_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  out << "epoch,acc,omega0,omega1,omega2\n";
  out.precision(9);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.train_acc << ',' << r.w0 << ',' << r.w1 << ',' << r.w2 << "\n";
  }
}

struct EvalOutputs {
  metrics::ConfusionMatrix cm;
  metrics::ScoredPredictions scored;
};

EvalOutputs run_eval(const Classifier& clf, const std::vector<data::SequenceSample>& split,
                     int n_classes) {
  EvalOutputs out{metrics::ConfusionMatrix(n_classes), {}};
  for (const auto& s : split) {
    auto p = clf.forward(sample_input(s));
    std::vector<double> row(p.data().begin(), p.data().end());
    const int arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    out.cm.add(s.y, arg);
    out.scored.prob.push_back(std::move(row));
    out.scored.label.push_back(s.y);
  }
  return out;
}

std::vector<data::SequenceSample> extract_diffusion_channel(
    const std::vector<data::SequenceSample>& split) {
  if (split.empty() || split.front().channels() != 1) {
    throw std::runtime_error(
        "diffusion augmentation needs single-channel windows; set data.channel to pick one");
  }
  return split;
}

diffusion::DenoiserConfig denoiser_config_of(const cfg::Config& config, int window_len,
                                             int n_classes) {
  diffusion::DenoiserConfig dc;
  dc.length = window_len;
  dc.n_classes = n_classes;
  dc.channels = config.get_int("diffusion.channels", 32);
  dc.blocks = config.get_int("diffusion.blocks", 3);
  dc.kernel = config.get_int("diffusion.kernel", 5);
  return dc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage 1

StageResult stage1_train_diffusion(const cfg::Config& config) {
  const RunPaths paths = paths_of(config);
  ensure_out_dir(paths, config);
  const std::uint64_t seed = root_seed(config);

  PreparedData prepared = prepare_data(config);
  const auto train = extract_diffusion_channel(prepared.splits.train);

  // prototypes are fit once, on real training data only
  std::vector<std::pair<std::vector<double>, int>> feats;
  feats.reserve(train.size());
  for (const auto& s : train) feats.emplace_back(s.f[0], s.y);
  const auto proto = stats::fit_prototypes(feats);

  const auto sched = diffusion::build_schedule(config.get_int("diffusion.T", 50),
                                               config.get_double("diffusion.s", 0.008));

  Rng init_rng = Rng(seed).child(kSeedInit);
  diffusion::DenoiserNet<double> net(
      denoiser_config_of(config, prepared.window_len, prepared.n_classes), init_rng);

  std::vector<diffusion::TrainSample> dset;
  dset.reserve(train.size());
  for (const auto& s : train) dset.push_back({s.x[0], s.f[0], s.y});

  diffusion::DiffusionTrainConfig tc;
  tc.epochs = config.get_int("diffusion.epochs", 40);
  tc.lr = config.get_double("diffusion.lr", 1e-3);
  tc.batch = config.get_int("diffusion.batch", 16);
  tc.seed = Rng(seed).child(kSeedDiffusion).root_seed();
  const auto trace = diffusion::train_denoiser(dset, sched, net, tc);

  io::Container c;
  add_params(c, net.parameters());
  for (int label : proto.labels()) {
    const auto& mu = proto.prototype(label);
    c.add_f64("proto/" + std::to_string(label),
              {static_cast<std::uint32_t>(mu.size())}, mu);
  }
  add_common_meta(c, prepared, config);
  c.add_text("meta/arch", "denoiser");
  c.save(paths.diffusion_ckpt());

  {
    std::ofstream out(paths.diffusion_trace());
    out << "epoch,loss\n";
    out.precision(12);
    for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << trace[i] << "\n";
  }

  StageResult res;
  res.checkpoint = paths.diffusion_ckpt();
  res.log_lines.push_back("stage1: trained " + std::to_string(tc.epochs) + " epochs on " +
                          std::to_string(train.size()) + " windows");
  return res;
}

// ---------------------------------------------------------------------------
// Stage 2

namespace {

stats::PrototypeTable prototypes_from(const io::Container& c) {
  stats::PrototypeTable proto;
  for (const auto& e : c.entries()) {
    if (e.name.rfind("proto/", 0) == 0) {
      proto.insert(std::stoi(e.name.substr(6)), e.as_f64(), 1);
    }
  }
  return proto;
}

diffusion::DenoiserNet<double> load_denoiser(const io::Container& c, int window_len,
                                             int n_classes) {
  const cfg::Config saved = cfg::Config::from_string(c.require("meta/config").as_text());
  Rng rng(0);
  diffusion::DenoiserNet<double> net(denoiser_config_of(saved, window_len, n_classes), rng);
  auto params = net.parameters();
  load_params(c, params);
  return net;
}

}  // namespace

namespace {

std::vector<data::SequenceSample> synthesize_samples(const cfg::Config& config,
                                                     const PreparedData& prepared,
                                                     int synth_count) {
  const RunPaths paths = paths_of(config);
  const io::Container diff_ckpt = io::Container::load(paths.diffusion_ckpt());
  const auto proto = prototypes_from(diff_ckpt);
  const auto net = load_denoiser(diff_ckpt, prepared.window_len, prepared.n_classes);
  const auto sched = diffusion::build_schedule(config.get_int("diffusion.T", 50),
                                               config.get_double("diffusion.s", 0.008));
  const auto synth = diffusion::synthesize_dataset(
      net, sched, proto, synth_count,
      Rng(root_seed(config)).child(kSeedSynthesis).root_seed());

  std::vector<data::SequenceSample> out;
  out.reserve(synth.size());
  for (const auto& s : synth) {
    data::SequenceSample q;
    q.x = {s.x};
    q.f = {s.f};
    q.y = s.y;
    q.synthetic = true;
    out.push_back(std::move(q));
  }
  data::write_windows_csv(paths.synthetic_csv(), out, prepared.label_names);
  return out;
}

}  // namespace

StageResult synth_dataset(const cfg::Config& config) {
  const RunPaths paths = paths_of(config);
  ensure_out_dir(paths, config);
  PreparedData prepared = prepare_data(config);
  int synth_count = config.get_int("pretrain.M", -1);
  if (synth_count < 0) synth_count = static_cast<int>(prepared.splits.train.size());
  if (synth_count == 0) throw std::runtime_error("synth: pretrain.M=0 leaves nothing to do");
  const auto synth = synthesize_samples(config, prepared, synth_count);
  StageResult res;
  res.checkpoint = paths.synthetic_csv();
  res.log_lines.push_back("synth: wrote " + std::to_string(synth.size()) + " windows to " +
                          paths.synthetic_csv());
  return res;
}

StageResult stage2_pretrain_classifier(const cfg::Config& config) {
  const RunPaths paths = paths_of(config);
  ensure_out_dir(paths, config);
  const std::uint64_t seed = root_seed(config);

  PreparedData prepared = prepare_data(config);
  StageResult res;

  int synth_count = config.get_int("pretrain.M", -1);
  if (synth_count < 0) synth_count = static_cast<int>(prepared.splits.train.size());
  if (synth_count == 0) {
    res.log_lines.push_back("stage2: skipped (pretrain.M=0, ablation mode)");
    append_train_log(paths.train_log(), {});
    return res;
  }

  const auto synth_samples = synthesize_samples(config, prepared, synth_count);

  Rng init_rng = Rng(seed).child(kSeedInit);
  Classifier clf(config.get_string("net.arch", "usad") == "pretrain"
                     ? Classifier::Arch::kPretrain
                     : Classifier::Arch::kUsad,
                 branch_config_from(config, prepared.n_classes, 5 * prepared.channels), init_rng);

  TrainOptions opt;
  opt.stage = "pretrain";
  opt.epochs = config.get_int("pretrain.epochs", 20);
  opt.batch = config.get_int("pretrain.batch", 16);
  opt.lr = config.get_double("pretrain.lr", 1e-3);
  opt.seed = Rng(seed).child(kSeedPretrain).root_seed();
  opt.composite = false;  // synthetic pretraining minimizes plain cross-entropy
  const auto log = train_classifier(clf, synth_samples, nullptr, opt);
  append_train_log(paths.train_log(), log);

  save_classifier(paths.pretrain_ckpt(), clf, prepared, config);
  res.checkpoint = paths.pretrain_ckpt();
  res.log_lines.push_back("stage2: synthesized " + std::to_string(synth_samples.size()) +
                          " windows, pretrained " + std::to_string(opt.epochs) + " epochs");
  return res;
}

// ---------------------------------------------------------------------------
// Stage 3

FinetuneResult stage3_finetune(const cfg::Config& config) {
  const RunPaths paths = paths_of(config);
  ensure_out_dir(paths, config);
  const std::uint64_t seed = root_seed(config);

  PreparedData prepared = prepare_data(config);

  const bool augmented = fs::exists(paths.pretrain_ckpt());
  Classifier clf;
  if (augmented) {
    const std::string saved_hash = checkpoint_data_hash(paths.pretrain_ckpt());
    if (saved_hash != hex_u64(prepared.train_digest) &&
        !config.get_bool("finetune.force", false)) {
      throw std::runtime_error(
          "stage3: training data hash mismatch with pretrain checkpoint (use finetune.force=true "
          "to override)");
    }
    clf = load_classifier(paths.pretrain_ckpt(), config, prepared.n_classes,
                          5 * prepared.channels);
  } else {
    Rng init_rng = Rng(seed).child(kSeedInit);
    clf = Classifier(config.get_string("net.arch", "usad") == "pretrain"
                         ? Classifier::Arch::kPretrain
                         : Classifier::Arch::kUsad,
                     branch_config_from(config, prepared.n_classes, 5 * prepared.channels),
                     init_rng);
  }

  // optional synthetic blending (off by default; Eq. 17 fine-tunes on real)
  std::vector<data::SequenceSample> train = prepared.splits.train;
  const double synth_ratio = config.get_double("finetune.synth_ratio", 0.0);
  if (synth_ratio > 0.0 && fs::exists(paths.synthetic_csv())) {
    auto synth = data::read_windows_csv(paths.synthetic_csv());
    const auto want = static_cast<std::size_t>(synth_ratio * static_cast<double>(train.size()));
    for (std::size_t i = 0; i < synth.size() && i < want; ++i) train.push_back(synth[i]);
  }

  TrainOptions opt;
  opt.stage = "finetune";
  opt.epochs = config.get_int("finetune.epochs", 30);
  opt.batch = config.get_int("finetune.batch", 16);
  opt.lr = config.get_double("finetune.lr", 1e-3);
  opt.seed = Rng(seed).child(kSeedFinetune).root_seed();
  opt.composite = true;
  opt.adaptive = config.get_bool("loss.adaptive", true);
  opt.state = loss_state_of(config);
  opt.focal.gamma = config.get_double("loss.gamma", 1.0);
  opt.focal.alpha = config.get_double("loss.alpha", 0.25);
  opt.smoothing.epsilon = config.get_double("loss.epsilon", 0.1);
  opt.smoothing.classes = prepared.n_classes;
  opt.cb = config.get_bool("loss.cb", false);
  opt.cb_beta = config.get_double("loss.cb_beta", 0.9);

  const auto log = train_classifier(clf, train, &prepared.splits.val, opt);
  append_train_log(paths.train_log(), log);
  write_weights_log(paths.weights_log(), log);

  save_classifier(paths.final_ckpt(), clf, prepared, config);

  const auto& eval_split =
      prepared.splits.test.empty() ? prepared.splits.train : prepared.splits.test;
  auto outputs = run_eval(clf, eval_split, prepared.n_classes);

  FinetuneResult res;
  res.stage.checkpoint = paths.final_ckpt();
  res.test_row = metrics::evaluate(outputs.cm, outputs.scored, "test", opt.epochs);
  for (int cidx = 0; cidx < prepared.n_classes; ++cidx) {
    res.per_class_recall.push_back(metrics::recall(outputs.cm, cidx));
  }

  std::ofstream mout(paths.metrics_csv());
  mout << metrics::metrics_csv_header() << "\n" << metrics::metrics_csv_row(res.test_row) << "\n";
  std::ofstream rout(paths.radar_csv());
  rout << metrics::radar_csv(res.test_row);

  res.stage.log_lines.push_back("stage3: fine-tuned " + std::to_string(opt.epochs) +
                                " epochs (augmented=" + (augmented ? "yes" : "no") + ")");
  return res;
}

metrics::EvalRow evaluate_checkpoint(const cfg::Config& config, const std::string& ckpt_path,
                                     const std::string& split_name) {
  PreparedData prepared = prepare_data(config);
  Classifier clf =
      load_classifier(ckpt_path, config, prepared.n_classes, 5 * prepared.channels);
  const auto* split = &prepared.splits.test;
  if (split_name == "train") split = &prepared.splits.train;
  if (split_name == "val") split = &prepared.splits.val;
  if (split->empty()) throw std::runtime_error("evaluate: split '" + split_name + "' is empty");
  auto outputs = run_eval(clf, *split, prepared.n_classes);
  return metrics::evaluate(outputs.cm, outputs.scored, split_name, 0);
}

// ---------------------------------------------------------------------------
// Ablation grid

std::string run_ablation(const cfg::Config& config, const std::vector<std::string>& toggles) {
  static const std::vector<std::string> kKnown = {"spatial_attn", "temporal_attn",
                                                  "adaptive_loss", "augmentation"};
  for (const auto& t : toggles) {
    if (std::find(kKnown.begin(), kKnown.end(), t) == kKnown.end()) {
      throw std::runtime_error("unknown ablation toggle '" + t + "'");
    }
  }
  const RunPaths paths = paths_of(config);
  ensure_out_dir(paths, config);

  PreparedData prepared = prepare_data(config);
  const std::string data_hash = hex_u64(prepared.train_digest);
  const std::string seed_str = std::to_string(root_seed(config));

  std::ostringstream csv;
  csv << "spatial_attn,temporal_attn,adaptive_loss,augmentation,"
      << "accuracy,precision,recall,f1_weighted,g_mean,auc,seed,data_hash\n";

  const std::size_t grid = std::size_t{1} << toggles.size();
  for (std::size_t mask = 0; mask < grid; ++mask) {
    cfg::Config run_cfg = config;
    std::map<std::string, bool> onoff = {{"spatial_attn", true},
                                         {"temporal_attn", true},
                                         {"adaptive_loss", true},
                                         {"augmentation", true}};
    for (std::size_t b = 0; b < toggles.size(); ++b) {
      onoff[toggles[b]] = (mask >> b) & 1;
    }
    run_cfg.set("net.spatial_attention", onoff["spatial_attn"] ? "true" : "false");
    run_cfg.set("net.temporal_attention", onoff["temporal_attn"] ? "true" : "false");
    run_cfg.set("loss.adaptive", onoff["adaptive_loss"] ? "true" : "false");
    run_cfg.set("out.dir", paths.out_dir + "/ablate_" + std::to_string(mask));
    if (!onoff["augmentation"]) {
      run_cfg.set("pretrain.M", "0");
    }

    if (onoff["augmentation"]) {
      stage1_train_diffusion(run_cfg);
      stage2_pretrain_classifier(run_cfg);
    }
    const auto res = stage3_finetune(run_cfg);
    csv << (onoff["spatial_attn"] ? 1 : 0) << ',' << (onoff["temporal_attn"] ? 1 : 0) << ','
        << (onoff["adaptive_loss"] ? 1 : 0) << ',' << (onoff["augmentation"] ? 1 : 0) << ',';
    csv.precision(9);
    csv << res.test_row.acc << ',' << res.test_row.precision << ',' << res.test_row.recall << ','
        << res.test_row.f1_weighted << ',' << res.test_row.g_mean << ',' << res.test_row.auc
        << ',' << seed_str << ',' << data_hash << "\n";
  }

  std::ofstream out(paths.ablation_csv());
  out << csv.str();
  return csv.str();
}

}  // namespace usad::pipeline
