#include "pedetect/histogram.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "pedetect/error.hpp"

namespace pedetect::hist {

namespace {

// Below this many (row x feature) updates threading costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;

double newton_score(const BinStats& s, double lambda) { return s.g * s.g / (s.h + lambda); }

/// Sum of squared class weights over total weight (negated weighted Gini).
double gini_score(const BinStats& s) {
  if (s.h <= 0.0) return 0.0;
  const double pos = s.g;
  const double neg = s.h - s.g;
  return (pos * pos + neg * neg) / s.h;
}

}  // namespace

BinnedMatrix BinnedMatrix::build(const Matrix& x, int max_bins) {
  if (max_bins < 2 || max_bins > 255) throw ConfigError("max_bins must lie in [2, 255]");
  BinnedMatrix b;
  b.rows_ = x.rows();
  b.cols_ = x.cols();
  b.bins_.resize(b.rows_ * b.cols_);
  b.cuts_.resize(b.cols_);
  b.offsets_.assign(b.cols_ + 1, 0);

  std::vector<float> column(b.rows_);
#pragma omp parallel for schedule(dynamic, 8) firstprivate(column)
  for (std::size_t f = 0; f < b.cols_; ++f) {
    for (std::size_t r = 0; r < b.rows_; ++r) column[r] = x(r, f);
    std::vector<float> sorted = column;
    std::sort(sorted.begin(), sorted.end());
    std::vector<float> uniques;
    std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(uniques));
    auto& cuts = b.cuts_[f];
    if (uniques.size() <= static_cast<std::size_t>(max_bins)) {
      cuts = std::move(uniques);
    } else {
      const std::size_t n = sorted.size();
      for (int k = 1; k <= max_bins; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(k) * n + max_bins - 1) / max_bins - 1;
        const float cut = sorted[std::min(idx, n - 1)];
        if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
      }
      if (cuts.back() < sorted.back()) cuts.back() = sorted.back();
    }
    if (cuts.empty()) cuts.push_back(0.0f);  // zero-row matrix
    auto* out = b.bins_.data() + f * b.rows_;
    for (std::size_t r = 0; r < b.rows_; ++r) {
      const auto it = std::lower_bound(cuts.begin(), cuts.end(), column[r]);
      out[r] = static_cast<std::uint8_t>(std::min<std::ptrdiff_t>(it - cuts.begin(), cuts.size() - 1));
    }
  }
  for (std::size_t f = 0; f < b.cols_; ++f) b.offsets_[f + 1] = b.offsets_[f] + b.cuts_[f].size();
  return b;
}

void build_histogram(const BinnedMatrix& bins, std::span<const std::uint32_t> rows,
                     std::span<const BinStats> gh, std::span<const int> features,
                     Histogram& out) {
  out.resize(bins.total_bins());
  const auto n_features = static_cast<std::ptrdiff_t>(features.size());
  const bool parallel = rows.size() * features.size() >= kParallelWork;
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
  for (std::ptrdiff_t i = 0; i < n_features; ++i) {
    const auto f = static_cast<std::size_t>(features[i]);
    BinStats* slot = out.data() + bins.bin_offset(f);
    std::fill(slot, slot + bins.n_bins(f), BinStats{});
    const std::uint8_t* col = bins.column(f).data();
    for (const auto r : rows) {
      BinStats& s = slot[col[r]];
      s.g += gh[r].g;
      s.h += gh[r].h;
    }
  }
}

void subtract_histogram(const Histogram& parent, const Histogram& child,
                        const BinnedMatrix& bins, std::span<const int> features, Histogram& out) {
  out.resize(bins.total_bins());
  for (const int f : features) {
    const std::size_t lo = bins.bin_offset(f);
    const std::size_t hi = lo + bins.n_bins(f);
    for (std::size_t k = lo; k < hi; ++k) {
      out[k].g = parent[k].g - child[k].g;
      out[k].h = parent[k].h - child[k].h;
    }
  }
}

double split_gain(const BinStats& left, const BinStats& right, const SplitParams& params) {
  const BinStats total{left.g + right.g, left.h + right.h};
  if (params.criterion == Criterion::newton) {
    return 0.5 * (newton_score(left, params.lambda) + newton_score(right, params.lambda) -
                  newton_score(total, params.lambda));
  }
  return gini_score(left) + gini_score(right) - gini_score(total);
}

SplitCandidate evaluate_cut(const BinnedMatrix& bins, const Histogram& hist, int feature,
                            int bin, const BinStats& total, const SplitParams& params) {
  SplitCandidate c;
  const BinStats* slot = hist.data() + bins.bin_offset(feature);
  BinStats left;
  for (int b = 0; b <= bin; ++b) {
    left.g += slot[b].g;
    left.h += slot[b].h;
  }
  const BinStats right{total.g - left.g, total.h - left.h};
  if (left.h < params.min_child_weight || right.h < params.min_child_weight) return c;
  const double gain = split_gain(left, right, params);
  if (!(gain > params.min_split_gain)) return c;
  c.feature = feature;
  c.bin = bin;
  c.threshold = bins.cuts(feature)[bin];
  c.gain = gain;
  c.left = left;
  c.right = right;
  return c;
}

SplitCandidate best_split(const BinnedMatrix& bins, const Histogram& hist,
                          std::span<const int> features, const BinStats& total,
                          const SplitParams& params) {
  SplitCandidate best;
  const bool newton = params.criterion == Criterion::newton;
  const double parent = newton ? newton_score(total, params.lambda) : gini_score(total);
  for (const int f : features) {
    const BinStats* slot = hist.data() + bins.bin_offset(f);
    const int nb = bins.n_bins(f);
    BinStats left;
    // The last non-empty bin can never be a cut (nothing would go right).
    for (int b = 0; b + 1 < nb; ++b) {
      if (slot[b].h <= 0.0) continue;  // same partition as the previous cut
      left.g += slot[b].g;
      left.h += slot[b].h;
      if (left.h < params.min_child_weight) continue;
      const BinStats right{total.g - left.g, total.h - left.h};
      if (right.h < params.min_child_weight) break;
      const double gain = newton ? 0.5 * (newton_score(left, params.lambda) +
                                          newton_score(right, params.lambda) - parent)
                                 : gini_score(left) + gini_score(right) - parent;
      if (gain > params.min_split_gain && gain > best.gain) {
        best.feature = f;
        best.bin = b;
        best.threshold = bins.cuts(f)[b];
        best.gain = gain;
        best.left = left;
        best.right = right;
      }
    }
  }
  return best;
}

void SparseColumn::gather(const BinnedMatrix& bins, std::span<const std::uint32_t> rows,
                          std::span<const BinStats> gh, int feature) {
  feature_ = feature;
  bins_.clear();
  stats_.clear();
  const std::uint8_t* col = bins.column(static_cast<std::size_t>(feature)).data();
  std::uint64_t seen[4] = {0, 0, 0, 0};
  for (const auto r : rows) {
    const std::uint8_t b = col[r];
    seen[b >> 6] |= std::uint64_t{1} << (b & 63);
    acc_[b].g += gh[r].g;
    acc_[b].h += gh[r].h;
  }
  for (int w = 0; w < 4; ++w) {
    for (std::uint64_t m = seen[w]; m != 0; m &= m - 1) {
      const int b = w * 64 + std::countr_zero(m);
      bins_.push_back(b);
      stats_.push_back(acc_[b]);
      acc_[b] = {};
    }
  }
}

SplitCandidate best_split(const BinnedMatrix& bins, const SparseColumn& column,
                          const BinStats& total, const SplitParams& params) {
  SplitCandidate best;
  const int f = column.feature();
  const int nb = bins.n_bins(f);
  const bool newton = params.criterion == Criterion::newton;
  const double parent = newton ? newton_score(total, params.lambda) : gini_score(total);
  const auto occupied = column.bins();
  const auto stats = column.stats();
  BinStats left;
  for (std::size_t i = 0; i < occupied.size(); ++i) {
    const int b = occupied[i];
    if (b + 1 >= nb) break;
    if (stats[i].h <= 0.0) continue;
    left.g += stats[i].g;
    left.h += stats[i].h;
    if (left.h < params.min_child_weight) continue;
    const BinStats right{total.g - left.g, total.h - left.h};
    if (right.h < params.min_child_weight) break;
    const double gain = newton ? 0.5 * (newton_score(left, params.lambda) +
                                        newton_score(right, params.lambda) - parent)
                               : gini_score(left) + gini_score(right) - parent;
    if (gain > params.min_split_gain && gain > best.gain) {
      best.feature = f;
      best.bin = b;
      best.threshold = bins.cuts(f)[b];
      best.gain = gain;
      best.left = left;
      best.right = right;
    }
  }
  return best;
}

SplitCandidate evaluate_cut(const BinnedMatrix& bins, const SparseColumn& column, int bin,
                            const BinStats& total, const SplitParams& params) {
  SplitCandidate c;
  const auto occupied = column.bins();
  const auto stats = column.stats();
  BinStats left;
  for (std::size_t i = 0; i < occupied.size() && occupied[i] <= bin; ++i) {
    left.g += stats[i].g;
    left.h += stats[i].h;
  }
  const BinStats right{total.g - left.g, total.h - left.h};
  if (left.h < params.min_child_weight || right.h < params.min_child_weight) return c;
  const double gain = split_gain(left, right, params);
  if (!(gain > params.min_split_gain)) return c;
  c.feature = column.feature();
  c.bin = bin;
  c.threshold = bins.cuts(c.feature)[bin];
  c.gain = gain;
  c.left = left;
  c.right = right;
  return c;
}

}  // namespace pedetect::hist
