#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pedetect/forest.hpp"
#include "pedetect/matrix.hpp"

namespace pedetect {

inline constexpr std::size_t kReducedDims[] = {128, 256, 384};

struct PcaProjection {
  std::size_t n_dims = 0;
  std::vector<double> mean;                // n_dims
  std::vector<double> components;          // k x n_dims, row-major, orthonormal rows
  std::vector<double> explained_variance;  // k, non-increasing

  std::size_t k() const { return explained_variance.size(); }
  std::span<const double> component(std::size_t i) const {
    return {components.data() + i * n_dims, n_dims};
  }

  friend bool operator==(const PcaProjection&, const PcaProjection&) = default;
};

/// Top-k principal components of the (n-1)-normalized covariance of `x`.
/// Each component's largest-magnitude coordinate is made positive (first such
/// coordinate on ties). Constant columns are left out of the eigenproblem;
/// when fewer than k directions carry variance, the remainder is filled with
/// unit vectors on constant columns (explained variance 0) in index order.
/// Throws DataError when rows < k or k > n_dims.
PcaProjection fit_pca(const Matrix& x, std::size_t k);

/// The first k components of a wider fit.
PcaProjection truncate(const PcaProjection& p, std::size_t k);

/// components * (x - mean).
std::vector<double> project(const PcaProjection& p, std::span<const float> x);
Matrix project(const PcaProjection& p, const Matrix& x);

struct FeatureMask {
  std::size_t n_dims = 0;
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> gains;           // selection-time gain of each index

  std::size_t k() const { return indices.size(); }
  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;
};

/// Gain-ranking model used for supervised selection.
struct XgbfsConfig {
  Hyperparams hp;
  std::uint64_t seed = 42;
};

XgbfsConfig default_xgbfs_config();

/// Total split gain per feature of a boosted model trained on (x, y).
/// Requires both classes and at least 50 rows.
std::vector<double> xgbfs_gains(const Matrix& x, std::span<const std::int8_t> y,
                                const XgbfsConfig& cfg);

/// Top-k by gain, ties to the lower index, returned ascending.
FeatureMask mask_from_gains(std::span<const double> gains, std::size_t k);

FeatureMask fit_xgbfs(const Matrix& x, std::span<const std::int8_t> y, std::size_t k,
                      const XgbfsConfig& cfg);

std::vector<float> select(const FeatureMask& m, std::span<const float> x);
Matrix select(const FeatureMask& m, const Matrix& x);

enum class ReductionMethod { pca, xgbfs };

std::string_view to_string(ReductionMethod m);
ReductionMethod reduction_from_string(std::string_view s);

/// A fitted reducer together with the lineage it was fitted under.
struct Reducer {
  ReductionMethod method = ReductionMethod::pca;
  std::variant<PcaProjection, FeatureMask> params;
  std::string scaler_fingerprint;  // scaler the training matrix went through
  std::string fitted_on;           // DatasetStore::fingerprint() of the fit rows

  std::size_t k() const;
  std::size_t n_dims() const;
  Matrix apply(const Matrix& x) const;
  std::vector<float> apply_row(std::span<const float> x) const;

  /// Content hash of the serialized reducer.
  std::string fingerprint() const;

  friend bool operator==(const Reducer&, const Reducer&) = default;
};

/// Mask reducers serialize as JSON text; PCA reducers as "RDCR", u32 header
/// length, JSON header, then little-endian f64 mean, components and explained
/// variance.
std::vector<std::uint8_t> encode_reducer(const Reducer& r);
Reducer decode_reducer(std::span<const std::uint8_t> bytes);

/// File name a reducer of this method is stored under ("reducer.json" or
/// "reducer.bin").
std::string reducer_file_name(ReductionMethod m);

}  // namespace pedetect
