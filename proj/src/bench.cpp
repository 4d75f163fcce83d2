#include "usad/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace usad::bench {

namespace {

using Clock = std::chrono::steady_clock;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  // nearest-rank
  const auto n = sorted.size();
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  return sorted[std::min(n - 1, rank == 0 ? 0 : rank - 1)];
}

class NullModel final : public InferenceModel {
 public:
  std::string name() const override { return "empty"; }
  void infer(const data::SequenceSample&) override {}
};

}  // namespace

LatencyReport measure_latency(InferenceModel& model,
                              const std::vector<data::SequenceSample>& stream,
                              const LatencyBudget& budget, int reps, int warmup) {
  if (stream.empty()) throw std::invalid_argument("measure_latency: empty stream");
  if (reps < 1) throw std::invalid_argument("measure_latency: reps must be >= 1");
  if (budget.budget_ms() <= 0.0) throw std::invalid_argument("measure_latency: empty budget");

  for (int i = 0; i < warmup; ++i) model.infer(stream[static_cast<std::size_t>(i) % stream.size()]);

  LatencyReport rep;
  rep.model_name = model.name();
  rep.reps = reps;
  rep.warmup = warmup;
  rep.budget_ms = budget.budget_ms();
  rep.window_ms.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto& w = stream[static_cast<std::size_t>(i) % stream.size()];
    const auto t0 = Clock::now();
    model.infer(w);
    const auto t1 = Clock::now();
    rep.window_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  // continuous streaming pass, 100 windows per the deployment protocol
  const int stream_n = std::min(reps, 100);
  const auto s0 = Clock::now();
  for (int i = 0; i < stream_n; ++i) {
    model.infer(stream[static_cast<std::size_t>(i) % stream.size()]);
  }
  rep.stream_total_ms = std::chrono::duration<double, std::milli>(Clock::now() - s0).count();

  std::vector<double> sorted = rep.window_ms;
  std::sort(sorted.begin(), sorted.end());
  rep.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
                static_cast<double>(sorted.size());
  rep.median_ms = quantile_sorted(sorted, 0.5);
  rep.p95_ms = quantile_sorted(sorted, 0.95);
  rep.pass = rep.p95_ms <= rep.budget_ms;
  rep.param_count = model.param_count();
  rep.memory_bytes = model.memory_bytes();
  return rep;
}

double harness_overhead_ms(const std::vector<data::SequenceSample>& stream, int reps,
                           int warmup) {
  NullModel null;
  LatencyBudget budget{1.0};
  return measure_latency(null, stream, budget, reps, warmup).mean_ms;
}

std::string report_csv(const LatencyReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << "model,row,window_index,ms,budget_ms,verdict,param_count,memory_bytes,reps,warmup,"
        "median_ms,p95_ms,stream_total_ms\n";
  for (std::size_t i = 0; i < r.window_ms.size(); ++i) {
    os << r.model_name << ",detail," << i << ',' << r.window_ms[i] << ',' << r.budget_ms << ','
       << (r.window_ms[i] <= r.budget_ms ? "pass" : "fail") << ',' << r.param_count << ','
       << r.memory_bytes << ',' << r.reps << ',' << r.warmup << ",,,\n";
  }
  os << r.model_name << ",summary,-1," << r.mean_ms << ',' << r.budget_ms << ','
     << (r.pass ? "pass" : "fail") << ',' << r.param_count << ',' << r.memory_bytes << ','
     << r.reps << ',' << r.warmup << ',' << r.median_ms << ',' << r.p95_ms << ','
     << r.stream_total_ms << "\n";
  return os.str();
}

void emit_report(const LatencyReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_report: cannot write '" + path + "'");
  out << report_csv(report);
  if (!out) throw std::runtime_error("emit_report: short write on '" + path + "'");
}

}  // namespace usad::bench
