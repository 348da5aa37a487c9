#include "pedetect/scaler.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "pedetect/error.hpp"

namespace pedetect {

using nlohmann::json;

namespace {

constexpr int kScalerFormatVersion = 1;

double scale_one(double x, const ScalerParams& p, std::size_t j) {
  const double robust = (x - p.median[j]) / p.iqr_scale[j];
  const double range = p.post_max[j] - p.post_min[j];
  if (range <= 0.0) return 0.0;
  return std::clamp((robust - p.post_min[j]) / range, 0.0, 1.0);
}

void check_dims(std::size_t got, const ScalerParams& p) {
  if (got != p.n_dims()) {
    throw DataError("scaler expects " + std::to_string(p.n_dims()) + " features, got " +
                    std::to_string(got));
  }
}

}  // namespace

double linear_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

std::string ScalerParams::fingerprint() const {
  Sha256Builder b;
  b.update("scaler-v1");
  b.update(fitted_on);
  for (const auto* v : {&median, &iqr_scale, &post_min, &post_max}) {
    b.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(v->data()),
                                           v->size() * sizeof(double)));
  }
  return b.hex();
}

ScalerParams fit_scaler(const DatasetStore& train) {
  if (train.n_rows() == 0) throw DataError("cannot fit a scaler on an empty store");
  for (auto l : train.labels) {
    if (l != 0 && l != 1) throw DataError("scaler training rows must be labeled 0 or 1");
  }
  const std::size_t n = train.n_rows();
  const std::size_t d = train.n_dims();
  ScalerParams p;
  p.median.resize(d);
  p.iqr_scale.resize(d);
  p.post_min.resize(d);
  p.post_max.resize(d);
  p.fitted_on = train.fingerprint();

  std::vector<double> column(n);
#pragma omp parallel for schedule(dynamic, 16) firstprivate(column)
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = train.features(i, j);
    std::sort(column.begin(), column.end());
    const double q1 = linear_quantile(column, 0.25);
    const double med = linear_quantile(column, 0.5);
    const double q3 = linear_quantile(column, 0.75);
    const double iqr = q3 - q1;
    p.median[j] = med;
    p.iqr_scale[j] = iqr > 0.0 ? iqr : 1.0;
    // Robust scaling is monotone, so the extremes map to the extremes.
    p.post_min[j] = (column.front() - med) / p.iqr_scale[j];
    p.post_max[j] = (column.back() - med) / p.iqr_scale[j];
  }
  return p;
}

std::vector<float> transform_row(std::span<const float> x, const ScalerParams& p) {
  check_dims(x.size(), p);
  std::vector<float> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = static_cast<float>(scale_one(x[j], p, j));
  return out;
}

ScaledMatrix transform(const Matrix& x, const ScalerParams& p) {
  check_dims(x.cols(), p);
  ScaledMatrix out{Matrix(x.rows(), x.cols()), p.fingerprint()};
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto src = x.row(i);
    auto dst = out.values.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<float>(scale_one(src[j], p, j));
  }
  return out;
}

ScaledMatrix transform(const DatasetStore& store, const ScalerParams& p) {
  return transform(store.features, p);
}

std::string scaler_to_json(const ScalerParams& p) {
  json j = {
      {"format", "scaler"},
      {"version", kScalerFormatVersion},
      {"fitted_on", p.fitted_on},
      {"fingerprint", p.fingerprint()},
      {"n_dims", p.n_dims()},
      {"median", p.median},
      {"iqr_scale", p.iqr_scale},
      {"post_min", p.post_min},
      {"post_max", p.post_max},
  };
  return j.dump() + "\n";
}

ScalerParams scaler_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("scaler: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "scaler") throw DataError("not a scaler file");
    if (j.at("version").get<int>() != kScalerFormatVersion) {
      throw DataError("scaler format version " + j.at("version").dump() + " unsupported");
    }
    ScalerParams p;
    p.fitted_on = j.at("fitted_on").get<std::string>();
    p.median = j.at("median").get<std::vector<double>>();
    p.iqr_scale = j.at("iqr_scale").get<std::vector<double>>();
    p.post_min = j.at("post_min").get<std::vector<double>>();
    p.post_max = j.at("post_max").get<std::vector<double>>();
    const std::size_t d = p.median.size();
    if (p.iqr_scale.size() != d || p.post_min.size() != d || p.post_max.size() != d) {
      throw DataError("scaler arrays disagree on length");
    }
    if (j.contains("fingerprint") && j["fingerprint"].get<std::string>() != p.fingerprint()) {
      throw ArtifactMismatch("scaler file content does not match its recorded fingerprint");
    }
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("scaler: ") + e.what());
  }
}

}  // namespace pedetect
