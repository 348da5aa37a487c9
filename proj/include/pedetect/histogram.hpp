#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pedetect/matrix.hpp"

namespace pedetect::hist {

/// Column-major quantized copy of a feature matrix.
///
/// A feature with at most `max_bins` distinct values gets one bin per value;
/// otherwise cut points are taken at evenly spaced order statistics. Bin b
/// holds values in (cuts[b-1], cuts[b]], so "bin <= b" and "x <= cuts[b]"
/// select the same rows.
class BinnedMatrix {
 public:
  static BinnedMatrix build(const Matrix& x, int max_bins);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const std::uint8_t> column(std::size_t f) const {
    return {bins_.data() + f * rows_, rows_};
  }
  std::span<const float> cuts(std::size_t f) const { return cuts_[f]; }
  int n_bins(std::size_t f) const { return static_cast<int>(cuts_[f].size()); }
  /// Offset of feature f's first bin in a flattened histogram.
  std::size_t bin_offset(std::size_t f) const { return offsets_[f]; }
  std::size_t total_bins() const { return offsets_.back(); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bins_;
  std::vector<std::vector<float>> cuts_;
  std::vector<std::size_t> offsets_;
};

/// Sum of first/second order statistics in one bin. For Gini-criterion trees
/// `g` carries the positive-class weight and `h` the total weight.
struct BinStats {
  double g = 0.0;
  double h = 0.0;
};

using Histogram = std::vector<BinStats>;

enum class Criterion { newton, gini };

struct SplitParams {
  Criterion criterion = Criterion::newton;
  double lambda = 1.0;            // newton only
  double min_child_weight = 1.0;  // minimum h on each side
  double min_split_gain = 0.0;    // a split must gain strictly more
};

struct SplitCandidate {
  int feature = -1;
  int bin = -1;
  float threshold = 0.0f;
  double gain = 0.0;
  BinStats left;
  BinStats right;

  bool valid() const { return feature >= 0; }
};

/// Accumulates per-row (g, h) for `rows` into the bins of `features`. Only
/// the slices of `out` belonging to `features` are written (zeroed first).
void build_histogram(const BinnedMatrix& bins, std::span<const std::uint32_t> rows,
                     std::span<const BinStats> gh, std::span<const int> features,
                     Histogram& out);

/// out[f] = parent[f] - child[f] over the given features.
void subtract_histogram(const Histogram& parent, const Histogram& child,
                        const BinnedMatrix& bins, std::span<const int> features, Histogram& out);

/// Loss reduction of a split into (left, right).
double split_gain(const BinStats& left, const BinStats& right, const SplitParams& params);

/// Best split over `features` (ascending). Ties keep the lowest feature index,
/// then the lowest bin index.
SplitCandidate best_split(const BinnedMatrix& bins, const Histogram& hist,
                          std::span<const int> features, const BinStats& total,
                          const SplitParams& params);

/// Evaluates one cut for a single feature: rows in bins <= `bin` go left.
SplitCandidate evaluate_cut(const BinnedMatrix& bins, const Histogram& hist, int feature,
                            int bin, const BinStats& total, const SplitParams& params);

/// Bins of one feature occupied by a row subset, ascending, with (g, h) sums
/// accumulated in row order. Sums are bit-identical to build_histogram, so
/// the sparse search below picks exactly the split best_split would, at a
/// cost that scales with the rows rather than the bin count.
class SparseColumn {
 public:
  void gather(const BinnedMatrix& bins, std::span<const std::uint32_t> rows,
              std::span<const BinStats> gh, int feature);
  int feature() const { return feature_; }
  std::span<const int> bins() const { return bins_; }
  std::span<const BinStats> stats() const { return stats_; }

 private:
  int feature_ = -1;
  std::array<BinStats, 256> acc_{};
  std::vector<int> bins_;
  std::vector<BinStats> stats_;
};

/// best_split restricted to one gathered feature.
SplitCandidate best_split(const BinnedMatrix& bins, const SparseColumn& column,
                          const BinStats& total, const SplitParams& params);

/// evaluate_cut on a gathered feature.
SplitCandidate evaluate_cut(const BinnedMatrix& bins, const SparseColumn& column, int bin,
                            const BinStats& total, const SplitParams& params);

}  // namespace pedetect::hist
