#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pedetect {

/// Area under the ROC curve via the midrank statistic; tied scores count as
/// half a correctly ordered pair. Throws DataError unless both classes occur.
double auc(std::span<const double> scores, std::span<const std::int8_t> labels);

struct OperatingPoint {
  double tpr = 0.0;
  double fpr = 0.0;
  double threshold = 0.0;
};

/// Most permissive threshold (smallest candidate) whose false-positive count
/// stays within floor(target_fpr * n_neg). Candidates are the distinct
/// scores plus one value just above the maximum. Samples with
/// score >= threshold are flagged. No interpolation.
OperatingPoint tpr_at_fpr(std::span<const double> scores, std::span<const std::int8_t> labels,
                          double target_fpr);

struct F1Point {
  double f1 = 0.0;
  double threshold = 0.0;
};

/// Best F1 over thresholds at the distinct scores (plus one above the
/// maximum). Ties go to the highest threshold.
F1Point best_f1(std::span<const double> scores, std::span<const std::int8_t> labels);

/// F1 when flagging score >= threshold.
double f1_at(std::span<const double> scores, std::span<const std::int8_t> labels,
             double threshold);

struct EvalReport {
  std::string dataset_tag;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double f1_best = 0.0;
  double f1_threshold = 0.0;
  double stored_threshold = 0.0;
  double f1_at_stored_threshold = 0.0;
  double auc = 0.0;
  double tpr_at_1pct_fpr = 0.0;
  double threshold_1pct_fpr = 0.0;
  double tpr_at_01pct_fpr = 0.0;
  double threshold_01pct_fpr = 0.0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport make_report(std::span<const double> scores, std::span<const std::int8_t> labels,
                       double stored_threshold, std::string dataset_tag);

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);

/// One line of the results table.
struct ReportRow {
  std::string reduction;  // "PCA" or "XGBFS"
  std::size_t dim = 0;
  std::string estimator;
  EvalReport report;
};

/// CSV with header "red.,dim.,est.,F1,AUC,TPR@1%,TPR@0.1%"; metrics printed
/// as percentages with two decimals.
std::string report_csv(std::span<const ReportRow> rows);

}  // namespace pedetect
