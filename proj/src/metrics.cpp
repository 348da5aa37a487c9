#include "pedetect/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "pedetect/error.hpp"

namespace pedetect {

using nlohmann::json;

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts check_inputs(std::span<const double> scores, std::span<const std::int8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DataError("scores and labels differ in length (" + std::to_string(scores.size()) +
                    " vs " + std::to_string(labels.size()) + ")");
  }
  ClassCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++c.pos;
    } else if (labels[i] == 0) {
      ++c.neg;
    } else {
      throw DataError("evaluation labels must be 0 or 1");
    }
    if (!std::isfinite(scores[i])) throw DataError("non-finite score");
  }
  if (c.pos == 0 || c.neg == 0) throw DataError("metrics need both classes present");
  return c;
}

/// Per distinct score (descending): how many positives and negatives have it.
struct Level {
  double score;
  std::size_t pos;
  std::size_t neg;
};

std::vector<Level> levels_descending(std::span<const double> scores,
                                     std::span<const std::int8_t> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<Level> out;
  for (const auto i : order) {
    if (out.empty() || out.back().score != scores[i]) out.push_back({scores[i], 0, 0});
    (labels[i] == 1 ? out.back().pos : out.back().neg) += 1;
  }
  return out;
}

double f1_from(std::size_t tp, std::size_t fp, std::size_t n_pos) {
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + n_pos);
}

double above_max(double max_score) {
  return std::nextafter(max_score, std::numeric_limits<double>::infinity());
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::int8_t> labels) {
  const auto counts = check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum keeps midranks integral.
  std::uint64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      pos_in_group += labels[order[j]] == 1;
      ++j;
    }
    // Ranks i+1 .. j share the midrank (i+1+j)/2.
    twice_rank_sum += static_cast<std::uint64_t>(pos_in_group) * (i + 1 + j);
    i = j;
  }
  const double p = static_cast<double>(counts.pos);
  const double n = static_cast<double>(counts.neg);
  const double u = static_cast<double>(twice_rank_sum) / 2.0 - p * (p + 1.0) / 2.0;
  return u / (p * n);
}

OperatingPoint tpr_at_fpr(std::span<const double> scores, std::span<const std::int8_t> labels,
                          double target_fpr) {
  const auto counts = check_inputs(scores, labels);
  if (!(target_fpr >= 0.0 && target_fpr < 1.0)) {
    throw ConfigError("target FPR must lie in [0, 1)");
  }
  const auto allowed = static_cast<std::size_t>(
      std::floor(target_fpr * static_cast<double>(counts.neg) + 1e-9));
  const auto levels = levels_descending(scores, labels);

  // Walk thresholds from the top down; the last admissible one is the smallest.
  OperatingPoint best{0.0, 0.0, above_max(levels.front().score)};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& lv : levels) {
    tp += lv.pos;
    fp += lv.neg;
    if (fp > allowed) break;
    best = {static_cast<double>(tp) / static_cast<double>(counts.pos),
            static_cast<double>(fp) / static_cast<double>(counts.neg), lv.score};
  }
  return best;
}

F1Point best_f1(std::span<const double> scores, std::span<const std::int8_t> labels) {
  const auto counts = check_inputs(scores, labels);
  const auto levels = levels_descending(scores, labels);
  F1Point best{0.0, above_max(levels.front().score)};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& lv : levels) {
    tp += lv.pos;
    fp += lv.neg;
    const double f1 = f1_from(tp, fp, counts.pos);
    if (f1 > best.f1) best = {f1, lv.score};
  }
  return best;
}

double f1_at(std::span<const double> scores, std::span<const std::int8_t> labels,
             double threshold) {
  const auto counts = check_inputs(scores, labels);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) (labels[i] == 1 ? tp : fp) += 1;
  }
  return f1_from(tp, fp, counts.pos);
}

EvalReport make_report(std::span<const double> scores, std::span<const std::int8_t> labels,
                       double stored_threshold, std::string dataset_tag) {
  const auto counts = check_inputs(scores, labels);
  EvalReport r;
  r.dataset_tag = std::move(dataset_tag);
  r.n_pos = counts.pos;
  r.n_neg = counts.neg;
  const auto f1 = best_f1(scores, labels);
  r.f1_best = f1.f1;
  r.f1_threshold = f1.threshold;
  r.stored_threshold = stored_threshold;
  r.f1_at_stored_threshold = f1_at(scores, labels, stored_threshold);
  r.auc = auc(scores, labels);
  const auto op1 = tpr_at_fpr(scores, labels, 0.01);
  r.tpr_at_1pct_fpr = op1.tpr;
  r.threshold_1pct_fpr = op1.threshold;
  const auto op01 = tpr_at_fpr(scores, labels, 0.001);
  r.tpr_at_01pct_fpr = op01.tpr;
  r.threshold_01pct_fpr = op01.threshold;
  return r;
}

std::string report_to_json(const EvalReport& r) {
  const json j = {{"dataset_tag", r.dataset_tag},
                  {"n_pos", r.n_pos},
                  {"n_neg", r.n_neg},
                  {"f1_best", r.f1_best},
                  {"f1_threshold", r.f1_threshold},
                  {"stored_threshold", r.stored_threshold},
                  {"f1_at_stored_threshold", r.f1_at_stored_threshold},
                  {"auc", r.auc},
                  {"tpr_at_1pct_fpr", r.tpr_at_1pct_fpr},
                  {"threshold_1pct_fpr", r.threshold_1pct_fpr},
                  {"tpr_at_01pct_fpr", r.tpr_at_01pct_fpr},
                  {"threshold_01pct_fpr", r.threshold_01pct_fpr}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.dataset_tag = j.at("dataset_tag").get<std::string>();
    r.n_pos = j.at("n_pos").get<std::size_t>();
    r.n_neg = j.at("n_neg").get<std::size_t>();
    r.f1_best = j.at("f1_best").get<double>();
    r.f1_threshold = j.at("f1_threshold").get<double>();
    r.stored_threshold = j.at("stored_threshold").get<double>();
    r.f1_at_stored_threshold = j.at("f1_at_stored_threshold").get<double>();
    r.auc = j.at("auc").get<double>();
    r.tpr_at_1pct_fpr = j.at("tpr_at_1pct_fpr").get<double>();
    r.threshold_1pct_fpr = j.at("threshold_1pct_fpr").get<double>();
    r.tpr_at_01pct_fpr = j.at("tpr_at_01pct_fpr").get<double>();
    r.threshold_01pct_fpr = j.at("threshold_01pct_fpr").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = "red.,dim.,est.,F1,AUC,TPR@1%,TPR@0.1%\n";
  char buf[256];
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::snprintf(buf, sizeof buf, "%s,%zu,%s,%.2f,%.2f,%.2f,%.2f\n", row.reduction.c_str(),
                  row.dim, row.estimator.c_str(), 100.0 * r.f1_best, 100.0 * r.auc,
                  100.0 * r.tpr_at_1pct_fpr, 100.0 * r.tpr_at_01pct_fpr);
    out += buf;
  }
  return out;
}

}  // namespace pedetect
