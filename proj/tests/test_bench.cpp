#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "usad/bench.hpp"
#include "usad/data.hpp"
#include "usad/usad_net.hpp"

using namespace usad;
using namespace usad::bench;

namespace {

std::vector<data::SequenceSample> toy_stream(int count, int length) {
  data::ToyConfig cfg = data::default_toy_config(2, length, (count + 1) / 2, 467);
  auto ds = data::make_toy_dataset(cfg);
  ds.resize(static_cast<std::size_t>(count));
  return ds;
}

class SleepStub final : public InferenceModel {
 public:
  explicit SleepStub(double ms) : ms_(ms) {}
  std::string name() const override { return "sleep_stub"; }
  void infer(const data::SequenceSample&) override {
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms_));
  }

 private:
  double ms_;
};

}  // namespace

TEST_CASE("latency budget is 5% of the segment: WISDM 4 s -> 200 ms") {
  CHECK(LatencyBudget{4.0}.budget_ms() == doctest::Approx(200.0));
  CHECK(LatencyBudget{10.0}.budget_ms() == doctest::Approx(500.0));
}

TEST_CASE("sleep stub of 5 ms is measured within 20%") {
  auto stream = toy_stream(4, 16);
  SleepStub stub(5.0);
  const auto report = measure_latency(stub, stream, LatencyBudget{4.0}, 30, 3);
  CHECK(report.mean_ms > 4.0);
  CHECK(report.mean_ms < 6.0);
  CHECK(report.pass);  // well under the 200 ms budget
}

TEST_CASE("report aggregates are ordered and within range") {
  auto stream = toy_stream(4, 16);
  SleepStub stub(1.0);
  const auto report = measure_latency(stub, stream, LatencyBudget{4.0}, 25, 2);
  REQUIRE(report.window_ms.size() == 25);
  double lo = report.window_ms[0], hi = report.window_ms[0];
  for (double v : report.window_ms) {
    CHECK(v >= 0.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(report.mean_ms >= lo);
  CHECK(report.mean_ms <= hi);
  CHECK(report.median_ms >= lo);
  CHECK(report.p95_ms <= hi);
  CHECK(report.stream_total_ms > 0.0);
}

TEST_CASE("reps=1 produces a single timing row") {
  auto stream = toy_stream(2, 16);
  SleepStub stub(0.5);
  const auto report = measure_latency(stub, stream, LatencyBudget{4.0}, 1, 0);
  CHECK(report.window_ms.size() == 1);
  CHECK(report.mean_ms == report.window_ms[0]);
  CHECK(report.p95_ms == report.window_ms[0]);
}

TEST_CASE("empty stream and bad reps are rejected") {
  SleepStub stub(1.0);
  CHECK_THROWS_AS(measure_latency(stub, {}, LatencyBudget{4.0}, 10, 1), std::invalid_argument);
  auto stream = toy_stream(2, 16);
  CHECK_THROWS_AS(measure_latency(stub, stream, LatencyBudget{4.0}, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("budget verdict flips with the budget") {
  auto stream = toy_stream(2, 16);
  SleepStub stub(2.0);
  const auto pass = measure_latency(stub, stream, LatencyBudget{4.0}, 10, 1);
  CHECK(pass.pass);
  // budget 0.02 s segment -> 1 ms budget; 2 ms stub fails
  const auto fail = measure_latency(stub, stream, LatencyBudget{0.02}, 10, 1);
  CHECK_FALSE(fail.pass);
}

TEST_CASE("report CSV: 100 detail rows plus summary, byte-stable re-emission") {
  auto stream = toy_stream(4, 16);
  SleepStub stub(0.1);
  const auto report = measure_latency(stub, stream, LatencyBudget{4.0}, 100, 2);

  const auto csv1 = report_csv(report);
  const auto csv2 = report_csv(report);
  CHECK(csv1 == csv2);

  int detail = 0, summary = 0;
  std::istringstream is(csv1);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.find(",detail,") != std::string::npos) ++detail;
    if (line.find(",summary,") != std::string::npos) ++summary;
    const bool has_pass = line.find("pass") != std::string::npos;
    const bool has_fail = line.find("fail") != std::string::npos;
    CHECK((has_pass || has_fail));
  }
  CHECK(detail == 100);
  CHECK(summary == 1);

  const auto path = (std::filesystem::temp_directory_path() /
                     ("usad_bench_" + std::to_string(::getpid()) + ".csv"))
                        .string();
  emit_report(report, path);
  emit_report(report, path);
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == csv1);
  std::filesystem::remove(path);
}

TEST_CASE("harness overhead is negligible next to a real model") {
  auto stream = toy_stream(4, 32);
  const double overhead = harness_overhead_ms(stream, 50, 5);

  Rng rng(479);
  net::BranchConfig cfg;
  cfg.channels = 8;
  cfg.n_classes = 2;
  net::UsadNet<double> tiny(cfg, rng);
  struct NetModel final : InferenceModel {
    const net::UsadNet<double>* net;
    std::string name() const override { return "tiny"; }
    void infer(const data::SequenceSample& w) override {
      net->forward(net::assemble_input<double>(w.x, w.f));
    }
  } model;
  model.net = &tiny;
  const auto report = measure_latency(model, stream, LatencyBudget{4.0}, 50, 5);
  CHECK(overhead < 0.05 * report.mean_ms);
}

TEST_CASE("footprint: parameter count and dtype-width scaling") {
  Rng rng(487);
  net::BranchConfig cfg;
  cfg.channels = 8;
  cfg.n_classes = 3;
  net::UsadNet<double> net_d(cfg, rng);
  Rng rng2(487);
  net::UsadNet<float> net_f(cfg, rng2);

  auto stream = toy_stream(1, 32);
  const auto fp_d = footprint<double>(net_d, stream[0]);
  const auto fp_f = footprint<float>(net_f, stream[0]);
  CHECK(fp_d.param_count == fp_f.param_count);
  CHECK(fp_d.param_count == nn::count_parameters(net_d.parameters()));

  // weight component scales exactly 2x between f64 and f32
  CHECK(fp_d.weight_bytes == 2 * fp_f.weight_bytes);
  CHECK(fp_d.activation_bytes > 0);
  CHECK(fp_d.total_bytes() == fp_d.weight_bytes + fp_d.activation_bytes);
}

TEST_CASE("empty model footprint is zero") {
  nn::ParamList<double> none;
  CHECK(nn::count_parameters(none) == 0);
}
