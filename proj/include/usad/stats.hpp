#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace usad::stats {

// Global moments plus the z-scored sequence of one channel. Population
// (divide-by-L) moments throughout; sigma == 0 inputs degrade to z = 0 and
// gamma = 0 via the eps floor.
struct StatFeatures {
  double mu = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;          // skewness, dimensionless
  std::vector<double> z;       // length L
};

StatFeatures compute_stats(std::span<const double> x, double eps = 1e-8);

// Conditioning vector layout: [mu.. (L) | sigma.. (L) | gamma.. (L) | z_1..z_L].
std::vector<double> build_condition_vector(const StatFeatures& s);

// Convenience: stats -> condition vector in one call.
std::vector<double> condition_vector(std::span<const double> x, double eps = 1e-8);

// Label-conditioned mean of condition vectors (one prototype per class).
class PrototypeTable {
 public:
  void insert(int label, std::vector<double> mean, long count);
  const std::vector<double>& prototype(int label) const;  // throws on missing label
  bool contains(int label) const { return mean_.count(label) != 0; }
  long count(int label) const;
  std::vector<int> labels() const;
  std::size_t size() const { return mean_.size(); }

 private:
  std::map<int, std::vector<double>> mean_;
  std::map<int, long> count_;
};

PrototypeTable fit_prototypes(const std::vector<std::pair<std::vector<double>, int>>& dataset);

}  // namespace usad::stats
