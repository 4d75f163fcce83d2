#include "usad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace usad::metrics {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1) throw std::invalid_argument("ConfusionMatrix: need at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const int> truth,
                                                  std::span<const int> pred, int classes) {
  if (truth.size() != pred.size()) {
    throw std::invalid_argument("ConfusionMatrix: truth/pred length mismatch");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int pred, long count) {
  if (truth < 0 || truth >= classes_ || pred < 0 || pred >= classes_ || count < 0) {
    throw std::out_of_range("ConfusionMatrix: bad cell (" + std::to_string(truth) + ", " +
                            std::to_string(pred) + ")");
  }
  counts_[static_cast<std::size_t>(truth) * classes_ + pred] += count;
}

long ConfusionMatrix::at(int truth, int pred) const {
  return counts_[static_cast<std::size_t>(truth) * classes_ + pred];
}

long ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), 0L);
}

long ConfusionMatrix::row_sum(int i) const {
  long s = 0;
  for (int j = 0; j < classes_; ++j) s += at(i, j);
  return s;
}

long ConfusionMatrix::col_sum(int i) const {
  long s = 0;
  for (int j = 0; j < classes_; ++j) s += at(j, i);
  return s;
}

namespace {

void check_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("metrics: empty confusion matrix");
}

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  check_nonempty(cm);
  long diag = 0;
  for (int i = 0; i < cm.classes(); ++i) diag += cm.at(i, i);
  return static_cast<double>(diag) / static_cast<double>(cm.total());
}

double precision(const ConfusionMatrix& cm, int i, bool* flagged) {
  check_nonempty(cm);
  const long denom = cm.col_sum(i);
  if (denom == 0) {
    if (flagged != nullptr) *flagged = true;
    return 0.0;
  }
  return static_cast<double>(cm.at(i, i)) / static_cast<double>(denom);
}

double recall(const ConfusionMatrix& cm, int i, bool* flagged) {
  check_nonempty(cm);
  const long denom = cm.row_sum(i);
  if (denom == 0) {
    if (flagged != nullptr) *flagged = true;
    return 0.0;
  }
  return static_cast<double>(cm.at(i, i)) / static_cast<double>(denom);
}

namespace {

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double f1_macro(const ConfusionMatrix& cm) {
  check_nonempty(cm);
  double acc = 0.0;
  for (int i = 0; i < cm.classes(); ++i) acc += f1_of(precision(cm, i), recall(cm, i));
  return acc / cm.classes();
}

double f1_weighted(const ConfusionMatrix& cm) {
  check_nonempty(cm);
  const double total = static_cast<double>(cm.total());
  double acc = 0.0;
  for (int i = 0; i < cm.classes(); ++i) {
    const double share = static_cast<double>(cm.row_sum(i)) / total;
    acc += share * f1_of(precision(cm, i), recall(cm, i));
  }
  return acc;
}

double precision_macro(const ConfusionMatrix& cm) {
  double acc = 0.0;
  for (int i = 0; i < cm.classes(); ++i) acc += precision(cm, i);
  return acc / cm.classes();
}

double recall_macro(const ConfusionMatrix& cm) {
  double acc = 0.0;
  for (int i = 0; i < cm.classes(); ++i) acc += recall(cm, i);
  return acc / cm.classes();
}

double g_mean(const ConfusionMatrix& cm) {
  check_nonempty(cm);
  double log_acc = 0.0;
  for (int i = 0; i < cm.classes(); ++i) {
    const double r = recall(cm, i);
    if (r == 0.0) return 0.0;
    log_acc += std::log(r);
  }
  return std::exp(log_acc / cm.classes());
}

double auc_binary(std::span<const double> score, std::span<const int> positive) {
  if (score.size() != positive.size() || score.empty()) {
    throw std::invalid_argument("auc_binary: bad inputs");
  }
  long n_pos = 0, n_neg = 0;
  for (int p : positive) (p != 0 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auc_binary: need at least one positive and one negative");
  }
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  // threshold sweep over distinct scores; ties advance TP and FP together so
  // tied groups become diagonal ROC segments (rank-statistic equivalent)
  double auc_acc = 0.0;
  double tp = 0.0, fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double d_tp = 0.0, d_fp = 0.0;
    while (j < order.size() && score[order[j]] == score[order[i]]) {
      (positive[order[j]] != 0 ? d_tp : d_fp) += 1.0;
      ++j;
    }
    const double tpr0 = tp / n_pos, fpr0 = fp / n_neg;
    tp += d_tp;
    fp += d_fp;
    const double tpr1 = tp / n_pos, fpr1 = fp / n_neg;
    auc_acc += 0.5 * (tpr0 + tpr1) * (fpr1 - fpr0);
    i = j;
  }
  return auc_acc;
}

double auc(const ScoredPredictions& scored, int* skipped_classes) {
  if (scored.prob.empty() || scored.prob.size() != scored.label.size()) {
    throw std::invalid_argument("auc: bad scored predictions");
  }
  const int classes = static_cast<int>(scored.prob.front().size());
  double acc = 0.0;
  int used = 0, skipped = 0;
  std::vector<double> score(scored.prob.size());
  std::vector<int> pos(scored.prob.size());
  for (int c = 0; c < classes; ++c) {
    long n_pos = 0;
    for (std::size_t i = 0; i < scored.prob.size(); ++i) {
      score[i] = scored.prob[i][static_cast<std::size_t>(c)];
      pos[i] = scored.label[i] == c ? 1 : 0;
      n_pos += pos[i];
    }
    if (n_pos == 0 || n_pos == static_cast<long>(pos.size())) {
      ++skipped;
      continue;
    }
    acc += auc_binary(score, pos);
    ++used;
  }
  if (skipped_classes != nullptr) *skipped_classes = skipped;
  if (used == 0) throw std::invalid_argument("auc: every class is degenerate");
  return acc / used;
}

double ece(const ScoredPredictions& scored, int bins) {
  if (bins < 1) throw std::invalid_argument("ece: bins must be >= 1");
  if (scored.prob.empty() || scored.prob.size() != scored.label.size()) {
    throw std::invalid_argument("ece: bad scored predictions");
  }
  std::vector<long> count(static_cast<std::size_t>(bins), 0);
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<long> correct(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < scored.prob.size(); ++i) {
    const auto& p = scored.prob[i];
    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(p.begin(), p.end()) - p.begin());
    const double conf = p[arg];
    const int b = std::min(bins - 1, static_cast<int>(conf * bins));
    count[static_cast<std::size_t>(b)] += 1;
    conf_sum[static_cast<std::size_t>(b)] += conf;
    correct[static_cast<std::size_t>(b)] += static_cast<int>(arg) == scored.label[i] ? 1 : 0;
  }
  const double n = static_cast<double>(scored.prob.size());
  double e = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (count[static_cast<std::size_t>(b)] == 0) continue;
    const double nb = static_cast<double>(count[static_cast<std::size_t>(b)]);
    const double acc_b = static_cast<double>(correct[static_cast<std::size_t>(b)]) / nb;
    const double conf_b = conf_sum[static_cast<std::size_t>(b)] / nb;
    e += nb / n * std::abs(acc_b - conf_b);
  }
  return e;
}

Separability feature_separability(
    const std::vector<std::pair<std::vector<double>, int>>& embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("feature_separability: empty input");
  const std::size_t dim = embeddings.front().first.size();
  std::map<int, std::vector<double>> centroid;
  std::map<int, long> count;
  for (const auto& [v, y] : embeddings) {
    if (v.size() != dim) {
      throw std::invalid_argument("feature_separability: inconsistent dimensions");
    }
    auto& c = centroid[y];
    if (c.empty()) c.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) c[i] += v[i];
    ++count[y];
  }
  if (centroid.size() < 2) {
    throw std::invalid_argument("feature_separability: need at least two classes");
  }
  for (auto& [y, c] : centroid) {
    for (auto& v : c) v /= static_cast<double>(count[y]);
  }

  Separability out;
  for (const auto& [v, y] : embeddings) {
    const auto& c = centroid[y];
    double d2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = v[i] - c[i];
      d2 += d * d;
    }
    out.intra += std::sqrt(d2);
  }
  out.intra /= static_cast<double>(embeddings.size());

  long pairs = 0;
  for (auto a = centroid.begin(); a != centroid.end(); ++a) {
    for (auto b = std::next(a); b != centroid.end(); ++b) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = a->second[i] - b->second[i];
        d2 += d * d;
      }
      out.inter += std::sqrt(d2);
      ++pairs;
    }
  }
  out.inter /= static_cast<double>(pairs);

  if (out.intra == 0.0) {
    out.intra_zero = true;
    out.ratio = std::numeric_limits<double>::infinity();
  } else {
    out.ratio = out.inter / out.intra;
  }
  return out;
}

EvalRow evaluate(const ConfusionMatrix& cm, const ScoredPredictions& scored,
                 const std::string& split, int epoch) {
  EvalRow row;
  row.split = split;
  row.epoch = epoch;
  row.acc = accuracy(cm);
  row.precision = precision_macro(cm);
  row.recall = recall_macro(cm);
  row.f1_macro = f1_macro(cm);
  row.f1_weighted = f1_weighted(cm);
  row.g_mean = g_mean(cm);
  row.auc = auc(scored);
  row.ece = ece(scored);
  return row;
}

std::string metrics_csv_header() {
  return "split,epoch,accuracy,precision,recall,f1_macro,f1_weighted,g_mean,auc,ece";
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

std::string metrics_csv_row(const EvalRow& r) {
  std::ostringstream os;
  os << r.split << ',' << r.epoch << ',' << fmt(r.acc) << ',' << fmt(r.precision) << ','
     << fmt(r.recall) << ',' << fmt(r.f1_macro) << ',' << fmt(r.f1_weighted) << ','
     << fmt(r.g_mean) << ',' << fmt(r.auc) << ',' << fmt(r.ece);
  return os.str();
}

std::string radar_csv(const EvalRow& r) {
  std::ostringstream os;
  os << "axis,value\n";
  os << "Acc," << fmt(r.acc) << "\nPre," << fmt(r.precision) << "\nRec," << fmt(r.recall)
     << "\nF1," << fmt(r.f1_weighted) << "\nG-mean," << fmt(r.g_mean) << "\nAUC," << fmt(r.auc)
     << "\n";
  return os.str();
}

}  // namespace usad::metrics
