#pragma once

#include <cstdint>
#include <vector>

#include "pedetect/dataset.hpp"

namespace pedetect {

/// Parameters of the generated benchmark corpus.
///
/// Columns are split at random into planted (class-dependent), dense noise,
/// sparse count noise and constant-zero groups. Planted columns carry a mean
/// shift of `separation` between the classes on a unit-variance bulk, plus
/// rare large class-independent outliers. After min-max scaling the outliers
/// squeeze the bulk into a narrow band, so planted columns carry little
/// variance: rank-based learners still see the signal, variance-based
/// projections mostly do not.
struct SynthParams {
  std::size_t n_rows = 10000;
  std::size_t n_dims = 2381;
  std::size_t n_informative = 40;
  std::size_t n_dense_noise = 900;
  std::size_t n_sparse_noise = 300;
  double separation = 0.5;
  double outlier_rate = 0.002;
  double positive_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct SynthCorpus {
  DatasetStore store;
  std::vector<std::uint32_t> planted;  // ascending
};

SynthCorpus generate_synthetic(const SynthParams& p);

/// Distortion standing in for obfuscated or drifted samples: every column
/// gets x' = a*x + b*sd (a uniform in [scale_lo, scale_hi], b standard
/// normal times `offset_sd`, sd the column's standard deviation in `store`),
/// then a random `zero_fraction` of the columns is set to zero.
struct ShiftParams {
  std::uint64_t seed = 0;
  double zero_fraction = 0.1;
  double scale_lo = 0.5;
  double scale_hi = 1.5;
  double offset_sd = 0.5;
};

DatasetStore apply_covariate_shift(const DatasetStore& store, const ShiftParams& p);

}  // namespace pedetect
