#pragma once

#include <memory>
#include <string>
#include <vector>

#include "usad/data.hpp"
#include "usad/nn.hpp"
#include "usad/usad_net.hpp"

namespace usad::bench {

// 5% of the segment duration, in milliseconds.
struct LatencyBudget {
  double segment_seconds = 4.0;

  double budget_ms() const { return 0.05 * segment_seconds * 1000.0; }
};

struct LatencyReport {
  std::string model_name;
  std::vector<double> window_ms;  // one entry per timed repetition
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double stream_total_ms = 0.0;   // continuous pass over min(reps, 100) windows
  double budget_ms = 0.0;
  bool pass = false;              // p95 <= budget
  long long param_count = 0;
  long long memory_bytes = 0;
  int reps = 0;
  int warmup = 0;
};

// Anything the harness can time.
class InferenceModel {
 public:
  virtual ~InferenceModel() = default;
  virtual std::string name() const = 0;
  virtual void infer(const data::SequenceSample& window) = 0;
  virtual long long param_count() const { return 0; }
  virtual long long memory_bytes() const { return 0; }
};

// Monotonic-clock timing, single-threaded; warmup runs are excluded.
LatencyReport measure_latency(InferenceModel& model,
                              const std::vector<data::SequenceSample>& stream,
                              const LatencyBudget& budget, int reps = 100, int warmup = 10);

// Mean per-window time of a model that does nothing, same protocol.
double harness_overhead_ms(const std::vector<data::SequenceSample>& stream, int reps = 100,
                           int warmup = 10);

// Long-format CSV: one row per window plus a trailing summary row; re-emission
// of the same report is byte-identical.
std::string report_csv(const LatencyReport& report);
void emit_report(const LatencyReport& report, const std::string& path);

struct Footprint {
  long long param_count = 0;
  long long weight_bytes = 0;      // param_count x dtype width
  long long activation_bytes = 0;  // high-water mark of one probe forward
  long long total_bytes() const { return weight_bytes + activation_bytes; }
};

template <typename T, typename Model>
Footprint footprint(const Model& model, const data::SequenceSample& probe) {
  Footprint fp;
  fp.param_count = nn::count_parameters(model.parameters());
  fp.weight_bytes = fp.param_count * static_cast<long long>(sizeof(T));
  auto& meter = ActivationMeter::instance();
  meter.begin();
  model.forward(net::assemble_input<T>(probe.x, probe.f));
  fp.activation_bytes = meter.end();
  return fp;
}

}  // namespace usad::bench
