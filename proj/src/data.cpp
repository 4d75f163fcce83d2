#include "usad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "usad/rng.hpp"
#include "usad/stats.hpp"

namespace usad::data {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, delim)) {
    // WISDM raw files end rows with ';'
    while (!field.empty() && (field.back() == ';' || field.back() == '\r' || field.back() == ' ')) {
      field.pop_back();
    }
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

RawRecording ingest_csv(const std::string& path, const CsvSchema& schema, IngestReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_csv: cannot open '" + path + "'");
  if (schema.value_cols.empty() || schema.value_cols.size() != schema.channel_names.size()) {
    throw std::invalid_argument("ingest_csv: schema must name every value column");
  }
  int max_col = std::max({schema.subject_col, schema.activity_col, schema.timestamp_col});
  for (int c : schema.value_cols) max_col = std::max(max_col, c);

  RawRecording rec;
  rec.channel_names = schema.channel_names;
  rec.channels.resize(schema.value_cols.size());
  rec.sample_rate = schema.sample_rate;

  std::map<std::string, int> label_ids;
  IngestReport rep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++rep.rows;
    const auto fields = split_line(line, schema.delimiter);
    bool ok = static_cast<int>(fields.size()) > max_col;
    std::vector<double> values(schema.value_cols.size());
    if (ok) {
      for (std::size_t c = 0; c < schema.value_cols.size(); ++c) {
        if (!parse_double(fields[static_cast<std::size_t>(schema.value_cols[c])], values[c])) {
          ok = false;
          break;
        }
      }
      if (ok && fields[static_cast<std::size_t>(schema.activity_col)].empty()) ok = false;
    }
    if (!ok) {
      ++rep.skipped;
      continue;
    }
    const std::string& activity = fields[static_cast<std::size_t>(schema.activity_col)];
    auto [it, inserted] = label_ids.emplace(activity, static_cast<int>(label_ids.size()));
    if (inserted) rec.label_names.push_back(activity);
    rec.labels.push_back(it->second);
    for (std::size_t c = 0; c < values.size(); ++c) rec.channels[c].push_back(values[c]);
    if (rec.subject.empty()) rec.subject = fields[static_cast<std::size_t>(schema.subject_col)];
  }
  if (rep.rows == 0) throw std::runtime_error("ingest_csv: '" + path + "' is empty");
  if (rec.length() == 0) throw std::runtime_error("ingest_csv: no parseable rows in '" + path + "'");
  if (static_cast<double>(rep.skipped) >
      schema.max_malformed_fraction * static_cast<double>(rep.rows)) {
    throw std::runtime_error("ingest_csv: " + std::to_string(rep.skipped) + " of " +
                             std::to_string(rep.rows) + " rows malformed in '" + path + "'");
  }
  if (report != nullptr) *report = rep;
  return rec;
}

void WindowSpec::validate() const {
  if (window_len < 1) throw std::invalid_argument("WindowSpec: window_len must be >= 1");
  if (step < 1 || step > window_len) {
    throw std::invalid_argument("WindowSpec: step must satisfy 1 <= step <= window_len");
  }
}

std::vector<SequenceSample> window(const RawRecording& rec, const WindowSpec& spec) {
  spec.validate();
  const auto n = rec.length();
  if (n < static_cast<std::size_t>(spec.window_len)) {
    throw std::invalid_argument("window: recording length " + std::to_string(n) +
                                " shorter than window " + std::to_string(spec.window_len));
  }
  if (rec.labels.size() != n) throw std::invalid_argument("window: labels must cover every timestep");

  std::vector<SequenceSample> out;
  for (std::size_t off = 0; off + spec.window_len <= n; off += static_cast<std::size_t>(spec.step)) {
    // majority label; ties resolve to the label appearing earliest in the window
    std::map<int, long> counts;
    for (int i = 0; i < spec.window_len; ++i) ++counts[rec.labels[off + static_cast<std::size_t>(i)]];
    if (spec.rule == LabelRule::kStrict && counts.size() > 1) continue;
    long best = 0;
    for (const auto& [label, c] : counts) best = std::max(best, c);
    int label = -1;
    for (int i = 0; i < spec.window_len; ++i) {
      const int cand = rec.labels[off + static_cast<std::size_t>(i)];
      if (counts[cand] == best) {
        label = cand;
        break;
      }
    }
    SequenceSample s;
    s.y = label;
    s.x.resize(rec.channels.size());
    s.f.resize(rec.channels.size());
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
      s.x[c].assign(rec.channels[c].begin() + static_cast<std::ptrdiff_t>(off),
                    rec.channels[c].begin() + static_cast<std::ptrdiff_t>(off) + spec.window_len);
      s.f[c] = stats::condition_vector(s.x[c]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Splits split(std::vector<SequenceSample> samples, std::array<double, 3> ratios,
             std::uint64_t seed, bool stratify) {
  const double rsum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(rsum - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");
  Rng rng(seed);

  auto assign = [&](std::vector<std::size_t>& idx, Splits& out) {
    // shuffle, then cut by largest-remainder so each split is within one
    // sample of its exact share
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    const auto n = static_cast<double>(idx.size());
    std::array<std::size_t, 3> want{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      const double exact = ratios[static_cast<std::size_t>(k)] * n;
      want[static_cast<std::size_t>(k)] = static_cast<std::size_t>(exact);
      frac[static_cast<std::size_t>(k)] = exact - std::floor(exact);
      assigned += want[static_cast<std::size_t>(k)];
    }
    while (assigned < idx.size()) {
      int best = 0;
      for (int k = 1; k < 3; ++k) {
        if (frac[static_cast<std::size_t>(k)] > frac[static_cast<std::size_t>(best)]) best = k;
      }
      ++want[static_cast<std::size_t>(best)];
      frac[static_cast<std::size_t>(best)] = -1.0;
      ++assigned;
    }
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      auto* dst = k == 0 ? &out.train : (k == 1 ? &out.val : &out.test);
      for (std::size_t i = 0; i < want[static_cast<std::size_t>(k)]; ++i, ++pos) {
        dst->push_back(samples[idx[pos]]);
      }
    }
  };

  Splits out;
  if (!stratify) {
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    assign(idx, out);
    return out;
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].y].push_back(i);
  for (auto& [label, idx] : by_class) {
    for (int k = 0; k < 3; ++k) {
      if (ratios[static_cast<std::size_t>(k)] > 0.0 &&
          idx.size() < 1) {
        throw std::invalid_argument("split: class " + std::to_string(label) +
                                    " has fewer samples than requested splits");
      }
    }
    assign(idx, out);
  }
  return out;
}

ImbalanceReport imbalance_report(const std::vector<SequenceSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("imbalance_report: empty dataset");
  ImbalanceReport rep;
  for (const auto& s : samples) ++rep.counts[s.y];
  long lo = samples.size(), hi = 0;
  double entropy = 0.0;
  const double n = static_cast<double>(samples.size());
  for (const auto& [label, c] : rep.counts) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log(p);
  }
  rep.max_min_ratio = static_cast<double>(hi) / static_cast<double>(lo);
  rep.entropy = entropy;
  return rep;
}

ToyConfig default_toy_config(int classes, int length, int per_class, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("default_toy_config: need at least two classes");
  ToyConfig cfg;
  cfg.length = length;
  cfg.per_class = per_class;
  cfg.seed = seed;
  for (int k = 0; k < classes; ++k) {
    cfg.classes.push_back({1.0 + 0.5 * k, 1.0 + static_cast<double>(k), 1.5 * k});
  }
  return cfg;
}

std::vector<SequenceSample> make_toy_dataset(const ToyConfig& cfg) {
  if (cfg.classes.size() < 2) throw std::invalid_argument("make_toy_dataset: need >= 2 classes");
  if (cfg.length < 1 || cfg.per_class < 1 || cfg.imbalance < 1.0) {
    throw std::invalid_argument("make_toy_dataset: bad config");
  }
  Rng rng(cfg.seed);
  std::vector<SequenceSample> out;
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (std::size_t k = 0; k < cfg.classes.size(); ++k) {
    const auto& spec = cfg.classes[k];
    const int count = k == 0 ? cfg.per_class
                             : std::max(1, static_cast<int>(std::llround(
                                               cfg.per_class / cfg.imbalance)));
    for (int i = 0; i < count; ++i) {
      // noise == 0 must reproduce identical windows per class, so the random
      // phase is part of the noise model
      const double phase = cfg.noise > 0.0 ? rng.uniform() * kTwoPi : 0.0;
      SequenceSample s;
      s.y = static_cast<int>(k);
      s.x.resize(1);
      s.x[0].resize(static_cast<std::size_t>(cfg.length));
      for (int j = 0; j < cfg.length; ++j) {
        const double t = static_cast<double>(j) / cfg.length;
        double v = spec.amplitude * std::sin(kTwoPi * spec.frequency * t + phase) + spec.offset;
        if (cfg.noise > 0.0) v += cfg.noise * rng.normal();
        s.x[0][static_cast<std::size_t>(j)] = v;
      }
      s.f.push_back(stats::condition_vector(s.x[0]));
      out.push_back(std::move(s));
    }
  }
  return out;
}

void write_windows_csv(const std::string& path, const std::vector<SequenceSample>& samples,
                       const std::vector<std::string>& label_names) {
  if (samples.empty()) throw std::invalid_argument("write_windows_csv: empty dataset");
  const std::size_t channels = samples.front().channels();
  const std::size_t len = samples.front().length();

  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_windows_csv: cannot write '" + path + "'");
  out << "label,synthetic";
  for (std::size_t i = 0; i < channels * len; ++i) out << ",v" << i;
  out << "\n";
  out.precision(17);
  for (const auto& s : samples) {
    if (s.channels() != channels || s.length() != len) {
      throw std::invalid_argument("write_windows_csv: inconsistent window shapes");
    }
    out << s.y << ',' << (s.synthetic ? 1 : 0);
    for (const auto& ch : s.x)
      for (double v : ch) out << ',' << v;
    out << "\n";
  }

  std::ofstream meta(path + ".meta");
  if (!meta) throw std::runtime_error("write_windows_csv: cannot write '" + path + ".meta'");
  meta << "channels=" << channels << "\nwindow_len=" << len << "\ncount=" << samples.size()
       << "\n";
  if (!label_names.empty()) {
    meta << "label_names=";
    for (std::size_t i = 0; i < label_names.size(); ++i) {
      if (i) meta << ';';
      meta << label_names[i];
    }
    meta << "\n";
  }
}

std::vector<SequenceSample> read_windows_csv(const std::string& path,
                                             std::vector<std::string>* label_names) {
  std::ifstream meta(path + ".meta");
  if (!meta) throw std::runtime_error("read_windows_csv: missing sidecar '" + path + ".meta'");
  std::size_t channels = 0, len = 0;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "channels") channels = std::stoul(value);
    if (key == "window_len") len = std::stoul(value);
    if (key == "label_names" && label_names != nullptr) {
      label_names->clear();
      std::istringstream is(value);
      std::string name;
      while (std::getline(is, name, ';')) label_names->push_back(name);
    }
  }
  if (channels == 0 || len == 0) {
    throw std::runtime_error("read_windows_csv: sidecar lacks shape info for '" + path + "'");
  }

  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_windows_csv: cannot open '" + path + "'");
  std::getline(in, line);  // header
  std::vector<SequenceSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line, ',');
    if (fields.size() != 2 + channels * len) {
      throw std::runtime_error("read_windows_csv: bad row width in '" + path + "'");
    }
    SequenceSample s;
    s.y = std::stoi(fields[0]);
    s.synthetic = fields[1] == "1";
    s.x.resize(channels);
    std::size_t pos = 2;
    for (std::size_t c = 0; c < channels; ++c) {
      s.x[c].resize(len);
      for (std::size_t j = 0; j < len; ++j, ++pos) {
        if (!parse_double(fields[pos], s.x[c][j])) {
          throw std::runtime_error("read_windows_csv: bad value in '" + path + "'");
        }
      }
      s.f.push_back(stats::condition_vector(s.x[c]));
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::runtime_error("read_windows_csv: no rows in '" + path + "'");
  return out;
}

std::uint64_t dataset_digest(const std::vector<SequenceSample>& samples) {
  // FNV-1a over labels, flags and raw value bytes
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& s : samples) {
    mix(&s.y, sizeof(s.y));
    const int flag = s.synthetic ? 1 : 0;
    mix(&flag, sizeof(flag));
    for (const auto& ch : s.x) mix(ch.data(), ch.size() * sizeof(double));
  }
  return h;
}

void refresh_condition_vectors(std::vector<SequenceSample>& samples) {
  for (auto& s : samples) {
    s.f.clear();
    for (const auto& ch : s.x) s.f.push_back(stats::condition_vector(ch));
  }
}

}  // namespace usad::data
