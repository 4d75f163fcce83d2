#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace usad::metrics {

// Rows are true classes, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);
  static ConfusionMatrix from_predictions(std::span<const int> truth, std::span<const int> pred,
                                          int classes);

  void add(int truth, int pred, long count = 1);
  long at(int truth, int pred) const;
  int classes() const { return classes_; }
  long total() const;
  long row_sum(int i) const;
  long col_sum(int i) const;

 private:
  int classes_;
  std::vector<long> counts_;
};

// Zero-denominator precision/recall evaluate to 0; `flagged` reports it.
double accuracy(const ConfusionMatrix& cm);
double precision(const ConfusionMatrix& cm, int i, bool* flagged = nullptr);
double recall(const ConfusionMatrix& cm, int i, bool* flagged = nullptr);
double f1_macro(const ConfusionMatrix& cm);
double f1_weighted(const ConfusionMatrix& cm);
double precision_macro(const ConfusionMatrix& cm);
double recall_macro(const ConfusionMatrix& cm);

// Geometric mean of per-class recalls (binary case reduces to
// sqrt(sensitivity * specificity)); any fully-missed class gives 0.
double g_mean(const ConfusionMatrix& cm);

struct ScoredPredictions {
  std::vector<std::vector<double>> prob;  // each row a distribution
  std::vector<int> label;
};

// Trapezoidal ROC integration; multiclass is macro one-vs-rest and degenerate
// classes (no positives or no negatives) are skipped with a diagnostic count.
double auc_binary(std::span<const double> score, std::span<const int> positive);
double auc(const ScoredPredictions& scored, int* skipped_classes = nullptr);

// Equal-width confidence bins on the max probability.
double ece(const ScoredPredictions& scored, int bins = 15);

struct Separability {
  double intra = 0.0;
  double inter = 0.0;
  double ratio = 0.0;       // inter / intra, +inf when intra == 0
  bool intra_zero = false;
};
Separability feature_separability(
    const std::vector<std::pair<std::vector<double>, int>>& embeddings);

// ---------------------------------------------------------------------------
// CSV emission

struct EvalRow {
  std::string split;
  int epoch = 0;
  double acc = 0, precision = 0, recall = 0, f1_macro = 0, f1_weighted = 0, g_mean = 0,
         auc = 0, ece = 0;
};

EvalRow evaluate(const ConfusionMatrix& cm, const ScoredPredictions& scored,
                 const std::string& split, int epoch);

std::string metrics_csv_header();
std::string metrics_csv_row(const EvalRow& row);

// Long-format rows for the radar axes (Acc, Pre, Rec, F1, G-mean, AUC).
std::string radar_csv(const EvalRow& row);

}  // namespace usad::metrics
