#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace usad::data {

struct RawRecording {
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;  // equal-length series
  std::vector<int> labels;                    // per-timestep label ids
  std::vector<std::string> label_names;       // id -> display name
  std::string subject;
  double sample_rate = 0.0;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
};

// WISDM-style layout: subject, activity, timestamp, then one column per channel.
struct CsvSchema {
  int subject_col = 0;
  int activity_col = 1;
  int timestamp_col = 2;
  std::vector<int> value_cols = {3, 4, 5};
  std::vector<std::string> channel_names = {"x", "y", "z"};
  char delimiter = ',';
  double sample_rate = 20.0;
  double max_malformed_fraction = 0.01;  // above this, ingestion is an error
};

struct IngestReport {
  std::size_t rows = 0;
  std::size_t skipped = 0;
};

RawRecording ingest_csv(const std::string& path, const CsvSchema& schema,
                        IngestReport* report = nullptr);

enum class LabelRule { kMajority, kStrict };

struct WindowSpec {
  int window_len = 90;
  int step = 45;
  LabelRule rule = LabelRule::kMajority;

  void validate() const;
};

struct SequenceSample {
  std::vector<std::vector<double>> x;  // C x L
  std::vector<std::vector<double>> f;  // per channel, length 4L
  int y = 0;
  bool synthetic = false;

  std::size_t channels() const { return x.size(); }
  std::size_t length() const { return x.empty() ? 0 : x.front().size(); }
};

// Windows at offsets 0, step, 2*step, ...; majority labels break ties toward
// the label seen earliest in the window; strict mode drops mixed windows.
std::vector<SequenceSample> window(const RawRecording& rec, const WindowSpec& spec);

struct Splits {
  std::vector<SequenceSample> train, val, test;
};

Splits split(std::vector<SequenceSample> samples, std::array<double, 3> ratios,
             std::uint64_t seed, bool stratify);

struct ImbalanceReport {
  std::map<int, long> counts;
  double max_min_ratio = 1.0;
  double entropy = 0.0;  // nats
};

ImbalanceReport imbalance_report(const std::vector<SequenceSample>& samples);

// ---------------------------------------------------------------------------
// Toy data

struct ToyClassSpec {
  double amplitude = 1.0;
  double frequency = 1.0;  // cycles per window
  double offset = 0.0;
};

struct ToyConfig {
  std::vector<ToyClassSpec> classes;
  int length = 32;
  int per_class = 50;          // majority class count
  double noise = 0.25;
  double imbalance = 1.0;      // class 0 keeps per_class, others per_class/imbalance
  std::uint64_t seed = 0;
};

// Evenly many sinusoid windows per class (scaled down by the imbalance factor
// for classes past the first), with random phase and Gaussian noise.
std::vector<SequenceSample> make_toy_dataset(const ToyConfig& cfg);

ToyConfig default_toy_config(int classes, int length, int per_class, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Windowed dataset CSV (one row per window: label, synthetic flag, flattened
// channel-major values) plus a sidecar "<path>.meta" describing the shape.

void write_windows_csv(const std::string& path, const std::vector<SequenceSample>& samples,
                       const std::vector<std::string>& label_names = {});
std::vector<SequenceSample> read_windows_csv(const std::string& path,
                                             std::vector<std::string>* label_names = nullptr);

// Content digest of a windowed dataset (labels + values), for checkpoint
// provenance checks.
std::uint64_t dataset_digest(const std::vector<SequenceSample>& samples);

// Recompute every cached conditioning vector from x (population stats).
void refresh_condition_vectors(std::vector<SequenceSample>& samples);

}  // namespace usad::data
