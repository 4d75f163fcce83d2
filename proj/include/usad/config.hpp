#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace usad::cfg {

// Flat key=value configuration with dotted namespaces (diffusion.T=200).
// Unknown keys are rejected against the documented key set; every consumer
// reads through the typed getters so the resolved snapshot is reproducible.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  // "key=value" as passed on the command line
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
  std::vector<int> get_ints(const std::string& key, std::vector<int> fallback) const;

  // Throws on any key outside `known`; call after all overrides are applied.
  void reject_unknown_keys(const std::set<std::string>& known) const;

  // Deterministic key-sorted snapshot, replayable through from_string().
  std::string resolved_text() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Every key the pipeline, bench and CLI understand.
const std::set<std::string>& known_keys();

}  // namespace usad::cfg
