#include "usad/stats.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace usad::stats {

StatFeatures compute_stats(std::span<const double> x, double eps) {
  if (x.empty()) throw std::invalid_argument("compute_stats: empty sequence");
  if (eps <= 0.0) throw std::invalid_argument("compute_stats: eps must be positive");
  const auto n = static_cast<double>(x.size());
  double mu = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("compute_stats: non-finite input");
    mu += v;
  }
  mu /= n;
  double var = 0.0;
  for (double v : x) {
    const double d = v - mu;
    var += d * d;
  }
  var /= n;
  StatFeatures s;
  s.mu = mu;
  s.sigma = std::sqrt(var);
  const double denom = std::max(s.sigma, eps);
  s.z.resize(x.size());
  double skew = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double zi = (x[i] - mu) / denom;
    s.z[i] = zi;
    skew += zi * zi * zi;
  }
  s.gamma = skew / n;
  return s;
}

std::vector<double> build_condition_vector(const StatFeatures& s) {
  const std::size_t len = s.z.size();
  std::vector<double> f(4 * len);
  for (std::size_t i = 0; i < len; ++i) {
    f[i] = s.mu;
    f[len + i] = s.sigma;
    f[2 * len + i] = s.gamma;
    f[3 * len + i] = s.z[i];
  }
  return f;
}

std::vector<double> condition_vector(std::span<const double> x, double eps) {
  return build_condition_vector(compute_stats(x, eps));
}

void PrototypeTable::insert(int label, std::vector<double> mean, long count) {
  if (count < 1) throw std::invalid_argument("PrototypeTable: count must be >= 1");
  mean_[label] = std::move(mean);
  count_[label] = count;
}

const std::vector<double>& PrototypeTable::prototype(int label) const {
  auto it = mean_.find(label);
  if (it == mean_.end()) {
    throw std::out_of_range("PrototypeTable: no prototype for label " + std::to_string(label));
  }
  return it->second;
}

long PrototypeTable::count(int label) const {
  auto it = count_.find(label);
  if (it == count_.end()) {
    throw std::out_of_range("PrototypeTable: no prototype for label " + std::to_string(label));
  }
  return it->second;
}

std::vector<int> PrototypeTable::labels() const {
  std::vector<int> out;
  out.reserve(mean_.size());
  for (const auto& [label, _] : mean_) out.push_back(label);
  return out;
}

PrototypeTable fit_prototypes(const std::vector<std::pair<std::vector<double>, int>>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("fit_prototypes: empty dataset");
  std::map<int, std::vector<double>> sums;
  std::map<int, long> counts;
  const std::size_t dim = dataset.front().first.size();
  for (const auto& [f, y] : dataset) {
    if (f.size() != dim) {
      throw std::invalid_argument("fit_prototypes: inconsistent feature length");
    }
    auto& acc = sums[y];
    if (acc.empty()) acc.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) acc[i] += f[i];
    ++counts[y];
  }
  PrototypeTable table;
  for (auto& [y, acc] : sums) {
    const double inv = 1.0 / static_cast<double>(counts[y]);
    for (auto& v : acc) v *= inv;
    table.insert(y, std::move(acc), counts[y]);
  }
  return table;
}

}  // namespace usad::stats
