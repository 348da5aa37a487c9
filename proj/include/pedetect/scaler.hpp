#pragma once

#include <span>
#include <string>
#include <vector>

#include "pedetect/dataset.hpp"
#include "pedetect/matrix.hpp"

namespace pedetect {

/// Robust (median / IQR) scaling followed by min-max scaling, both fitted on
/// the training rows only.
struct ScalerParams {
  std::vector<double> median;
  std::vector<double> iqr_scale;  // Q3 - Q1, or 1 where that is zero
  std::vector<double> post_min;   // of the robust-scaled training data
  std::vector<double> post_max;
  std::string fitted_on;          // DatasetStore::fingerprint() of the training rows

  std::size_t n_dims() const { return median.size(); }

  /// Content hash; downstream artifacts record it to detect mixed pipelines.
  std::string fingerprint() const;

  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

/// Feature matrix that has been through a scaler exactly once. Only
/// `transform` creates one, so a second scaling pass does not type-check.
struct ScaledMatrix {
  Matrix values;
  std::string scaler_fingerprint;
};

/// Quantile with linear interpolation between order statistics (position
/// q * (n - 1) in the sorted sample). `sorted` must be ascending.
double linear_quantile(std::span<const double> sorted, double q);

ScalerParams fit_scaler(const DatasetStore& train);

/// y = clip(((x - median) / iqr_scale - post_min) / (post_max - post_min), 0, 1),
/// and 0 wherever post_max == post_min.
ScaledMatrix transform(const Matrix& x, const ScalerParams& p);
ScaledMatrix transform(const DatasetStore& store, const ScalerParams& p);
std::vector<float> transform_row(std::span<const float> x, const ScalerParams& p);

std::string scaler_to_json(const ScalerParams& p);
ScalerParams scaler_from_json(const std::string& text);

}  // namespace pedetect
