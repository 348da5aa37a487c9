#include "pedetect/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pedetect/digest.hpp"
#include "pedetect/error.hpp"
#include "pedetect/rng.hpp"

namespace pedetect {

namespace {

enum class Kind : std::uint8_t { planted, dense, sparse, zero };

struct Column {
  Kind kind = Kind::zero;
  double loc = 0.0;
  double scale = 1.0;
  double rate = 0.0;  // sparse columns: Poisson mean
};

int poisson(Rng& rng, double mean) {
  // Knuth; means here are small.
  const double limit = std::exp(-mean);
  int k = 0;
  double prod = rng.uniform();
  while (prod > limit) {
    ++k;
    prod *= rng.uniform();
  }
  return k;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthParams& p) {
  const std::size_t used = p.n_informative + p.n_dense_noise + p.n_sparse_noise;
  if (used > p.n_dims) throw ConfigError("synthetic column groups exceed n_dims");
  if (p.n_rows < 4) throw ConfigError("synthetic corpus needs at least 4 rows");
  if (!(p.positive_fraction > 0.0 && p.positive_fraction < 1.0)) {
    throw ConfigError("positive_fraction must lie in (0, 1)");
  }

  Rng rng(mix_seed(p.seed, 0x5e7u));
  std::vector<std::uint32_t> order(p.n_dims);
  std::iota(order.begin(), order.end(), 0u);
  rng.shuffle(std::span<std::uint32_t>(order));

  std::vector<Column> cols(p.n_dims);
  SynthCorpus out;
  for (std::size_t i = 0; i < used; ++i) {
    Column& c = cols[order[i]];
    if (i < p.n_informative) {
      c.kind = Kind::planted;
      out.planted.push_back(order[i]);
    } else if (i < p.n_informative + p.n_dense_noise) {
      c.kind = Kind::dense;
    } else {
      c.kind = Kind::sparse;
      c.rate = rng.uniform(0.2, 3.0);
    }
    c.loc = rng.uniform(-5.0, 5.0);
    c.scale = std::exp(rng.uniform(-1.0, 2.0));
  }
  std::sort(out.planted.begin(), out.planted.end());

  const auto n_pos = static_cast<std::size_t>(std::llround(p.positive_fraction * p.n_rows));
  std::vector<std::int8_t> labels(p.n_rows, 0);
  std::fill(labels.begin(), labels.begin() + n_pos, 1);
  rng.shuffle(std::span<std::int8_t>(labels));

  std::vector<float> row(p.n_dims);
  for (std::size_t r = 0; r < p.n_rows; ++r) {
    Rng rr(mix_seed(p.seed, r + 1));
    const double sign = labels[r] == 1 ? 0.5 : -0.5;
    for (std::size_t j = 0; j < p.n_dims; ++j) {
      const Column& c = cols[j];
      double v = 0.0;
      switch (c.kind) {
        case Kind::planted: {
          double z = rr.normal() + sign * p.separation;
          if (rr.uniform() < p.outlier_rate) z = (rr.uniform() < 0.5 ? -1.0 : 1.0) * rr.uniform(40.0, 80.0);
          v = c.loc + c.scale * z;
          break;
        }
        case Kind::dense:
          v = c.loc + c.scale * rr.normal();
          break;
        case Kind::sparse:
          v = poisson(rr, c.rate);
          break;
        case Kind::zero:
          break;
      }
      row[j] = static_cast<float>(v);
    }
    out.store.append(row, labels[r], sha256("synthetic/" + std::to_string(p.seed) + "/" + std::to_string(r)),
                     "synthetic");
  }
  return out;
}

DatasetStore apply_covariate_shift(const DatasetStore& store, const ShiftParams& p) {
  if (!(p.zero_fraction >= 0.0 && p.zero_fraction <= 1.0)) {
    throw ConfigError("zero_fraction must lie in [0, 1]");
  }
  const std::size_t n = store.n_rows();
  const std::size_t d = store.n_dims();
  Rng rng(mix_seed(p.seed, 0x5417u));
  std::vector<double> a(d);
  std::vector<double> b(d);
  for (std::size_t j = 0; j < d; ++j) {
    a[j] = rng.uniform(p.scale_lo, p.scale_hi);
    b[j] = rng.normal() * p.offset_sd;
  }
  std::vector<std::uint32_t> cols(d);
  std::iota(cols.begin(), cols.end(), 0u);
  rng.shuffle(std::span<std::uint32_t>(cols));
  std::vector<bool> zeroed(d, false);
  const auto n_zero = static_cast<std::size_t>(std::llround(p.zero_fraction * static_cast<double>(d)));
  for (std::size_t i = 0; i < n_zero; ++i) zeroed[cols[i]] = true;

  std::vector<double> mean(d, 0.0);
  std::vector<double> sq(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = store.features.row(r);
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (auto& m : mean) m /= std::max<std::size_t>(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = store.features.row(r);
    for (std::size_t j = 0; j < d; ++j) sq[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
  }

  DatasetStore out = store;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.features.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = n > 1 ? std::sqrt(sq[j] / static_cast<double>(n - 1)) : 0.0;
      row[j] = zeroed[j] ? 0.0f : static_cast<float>(a[j] * row[j] + b[j] * sd);
    }
  }
  for (auto& tag : out.source_tag) tag += "+shift";
  return out;
}

}  // namespace pedetect
