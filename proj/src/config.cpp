#include "usad/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace usad::cfg {

namespace {

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

Config Config::from_string(const std::string& text) {
  Config c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trimmed(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(lineno) + " is not key=value: '" +
                               t + "'");
    }
    c.set(trimmed(t.substr(0, eq)), trimmed(t.substr(eq + 1)));
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::runtime_error("config: empty key");
  values_[key] = value;
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::runtime_error("override must be key=value, got '" + assignment + "'");
  }
  set(trimmed(assignment.substr(0, eq)), trimmed(assignment.substr(eq + 1)));
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "' is not a number: '" + it->second + "'");
  }
}

int Config::get_int(const std::string& key, int fallback) const {
  const double v = get_double(key, static_cast<double>(fallback));
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw std::runtime_error("config key '" + key + "' is not an integer");
  }
  return i;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "' is not an unsigned integer");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::runtime_error("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        std::vector<double> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  std::istringstream is(it->second);
  std::string piece;
  while (std::getline(is, piece, ',')) {
    try {
      out.push_back(std::stod(trimmed(piece)));
    } catch (const std::exception&) {
      throw std::runtime_error("config key '" + key + "' has a bad list element '" + piece + "'");
    }
  }
  if (out.empty()) throw std::runtime_error("config key '" + key + "' is an empty list");
  return out;
}

std::vector<int> Config::get_ints(const std::string& key, std::vector<int> fallback) const {
  std::vector<double> dd = get_doubles(key, {});
  if (dd.empty()) return fallback;
  std::vector<int> out;
  for (double v : dd) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) {
      throw std::runtime_error("config key '" + key + "' has a non-integer element");
    }
    out.push_back(i);
  }
  return out;
}

void Config::reject_unknown_keys(const std::set<std::string>& known) const {
  for (const auto& [key, _] : values_) {
    if (known.count(key) == 0) {
      throw std::runtime_error("unknown config key '" + key + "'");
    }
  }
}

std::string Config::resolved_text() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << '=' << value << '\n';
  return os.str();
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",
      "out.dir",
      // data
      "data.path",
      "data.toy",
      "data.toy.classes",
      "data.toy.length",
      "data.toy.per_class",
      "data.toy.noise",
      "data.toy.imbalance",
      "data.toy.amplitudes",
      "data.toy.frequencies",
      "data.toy.offsets",
      "data.window",
      "data.step",
      "data.label_rule",
      "data.split",
      "data.stratify",
      "data.normalize",
      "data.channel",
      // diffusion
      "diffusion.T",
      "diffusion.s",
      "diffusion.channels",
      "diffusion.blocks",
      "diffusion.kernel",
      "diffusion.epochs",
      "diffusion.lr",
      "diffusion.batch",
      // classifier network
      "net.arch",
      "net.K",
      "net.R",
      "net.channels",
      "net.kernels",
      "net.dropout",
      "net.spatial_attention",
      "net.temporal_attention",
      "net.spatial_site",
      // stage 2
      "pretrain.M",
      "pretrain.epochs",
      "pretrain.lr",
      "pretrain.batch",
      // stage 3
      "finetune.epochs",
      "finetune.lr",
      "finetune.batch",
      "finetune.synth_ratio",
      "finetune.force",
      // losses
      "loss.epsilon",
      "loss.gamma",
      "loss.alpha",
      "loss.tau",
      "loss.temperature",
      "loss.w_min",
      "loss.w_max",
      "loss.omega",
      "loss.adaptive",
      "loss.cb",
      "loss.cb_beta",
      // bench
      "bench.segment_seconds",
      "bench.reps",
      "bench.warmup",
      // ablation
      "ablate.toggles",
  };
  return keys;
}

}  // namespace usad::cfg
