#include "pedetect/vote_pair.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <unordered_set>

#include "json.hpp"
#include "pedetect/binary_io.hpp"
#include "pedetect/error.hpp"
#include "pedetect/metrics.hpp"

namespace pedetect {

using nlohmann::json;

namespace {

constexpr char kPairMagic[4] = {'P', 'A', 'I', 'R'};
constexpr std::uint32_t kPairVersion = 1;

struct ShaHash {
  std::size_t operator()(const Sha256& s) const {
    std::size_t h;
    std::memcpy(&h, s.data(), sizeof h);
    return h;
  }
};

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DataError(std::string(what) + " must lie in [0, 1], got " + std::to_string(v));
  }
}

}  // namespace

double fuse(double p1, double p2, double w) {
  check_unit(p1, "p1");
  check_unit(p2, "p2");
  check_unit(w, "w");
  const double s = w * p1 + (1.0 - w) * p2;
  return std::clamp(s, std::min(p1, p2), std::max(p1, p2));
}

SweepResult sweep_weight(std::span<const double> p1, std::span<const double> p2,
                         std::span<const std::int8_t> labels) {
  if (p1.size() != p2.size() || p1.size() != labels.size()) {
    throw DataError("weight sweep inputs differ in length");
  }
  SweepResult result;
  std::vector<double> fused(p1.size());
  bool have = false;
  for (int t = 0; t <= kWeightSteps; ++t) {
    const double w = t / 10.0;
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] = fuse(p1[i], p2[i], w);
    const auto f1 = best_f1(fused, labels);
    result.points.push_back({t, f1.f1, f1.threshold});
    const auto closeness = [](int tenths) { return std::abs(tenths - kWeightSteps / 2); };
    // Ascending w, so equal F1 and equal distance keeps the smaller w.
    if (!have || f1.f1 > result.f1 ||
        (f1.f1 == result.f1 && closeness(t) < closeness(result.w_tenths))) {
      result.w_tenths = t;
      result.f1 = f1.f1;
      result.threshold = f1.threshold;
      have = true;
    }
  }
  result.threshold = std::clamp(result.threshold, 0.0, 1.0);
  return result;
}

SweepResult sweep_weight(const Ensemble& m1, const Ensemble& m2, const DatasetStore& val) {
  return sweep_weight(m1.predict_proba(val.features), m2.predict_proba(val.features), val.labels);
}

Verdict predict(const PairModel& pm, std::span<const float> x) {
  const double s = fuse(pm.model_1.predict_proba(x), pm.model_2.predict_proba(x), pm.w());
  return {s, s >= pm.decision_threshold};
}

std::vector<double> predict_scores(const PairModel& pm, const Matrix& x) {
  const auto a = pm.model_1.predict_proba(x);
  const auto b = pm.model_2.predict_proba(x);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fuse(a[i], b[i], pm.w());
  return out;
}

std::vector<Verdict> predict(const PairModel& pm, const Matrix& x) {
  const auto scores = predict_scores(pm, x);
  std::vector<Verdict> out;
  out.reserve(scores.size());
  for (const double s : scores) out.push_back({s, s >= pm.decision_threshold});
  return out;
}

void check_disjoint(const DatasetStore& a, const DatasetStore& b, const std::string& a_name,
                    const std::string& b_name) {
  std::unordered_set<Sha256, ShaHash> seen(a.sha256.begin(), a.sha256.end());
  std::size_t shared = 0;
  for (const auto& s : b.sha256) shared += seen.count(s);
  if (shared > 0) {
    throw DataError(a_name + " and " + b_name + " share " + std::to_string(shared) +
                    " sha256 identities; partitions must be disjoint");
  }
}

PairTrainResult train_pair(const DatasetStore& train_a, const DatasetStore& train_b,
                           const DatasetStore& val, Estimator estimator,
                           const PairTrainParams& params) {
  check_disjoint(train_a, train_b, "train_a", "train_b");
  check_disjoint(train_a, val, "train_a", "validation");
  check_disjoint(train_b, val, "train_b", "validation");
  if (train_a.n_dims() != train_b.n_dims() || train_a.n_dims() != val.n_dims()) {
    throw DataError("pair partitions differ in dimensionality");
  }
  const auto space = search_space(estimator);
  auto r1 = search(space, params.budget, train_a, val, params.seed_1);
  auto r2 = search(space, params.budget, train_b, val, params.seed_2);

  PairTrainResult out;
  out.model.estimator = estimator;
  out.model.model_1 = std::move(r1.best_model);
  out.model.model_2 = std::move(r2.best_model);
  out.sweep = sweep_weight(out.model.model_1, out.model.model_2, val);
  out.model.w_tenths = out.sweep.w_tenths;
  out.model.decision_threshold = out.sweep.threshold;
  out.log_1 = std::move(r1.log);
  out.log_2 = std::move(r2.log);
  return out;
}

std::vector<std::uint8_t> encode_pair(const PairModel& pm) {
  const auto b1 = encode_model(pm.model_1);
  const auto b2 = encode_model(pm.model_2);
  const json meta = {{"estimator", std::string(to_string(pm.estimator))},
                     {"w_tenths", pm.w_tenths},
                     {"decision_threshold", pm.decision_threshold},
                     {"reducer_fingerprint", pm.reducer_fingerprint},
                     {"scaler_fingerprint", pm.scaler_fingerprint},
                     {"model_sizes", {b1.size(), b2.size()}}};
  const std::string text = meta.dump();
  ByteWriter w;
  w.put_string(std::string_view(kPairMagic, 4));
  w.put(kPairVersion);
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_string(text);
  w.put_bytes(b1);
  w.put_bytes(b2);
  return std::move(w.bytes());
}

PairModel decode_pair(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "pair");
  if (r.get_string(4) != std::string_view(kPairMagic, 4)) throw DataError("pair: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kPairVersion) throw DataError("pair: unsupported version " + std::to_string(version));
  const auto len = r.get<std::uint32_t>();
  PairModel pm;
  std::vector<std::size_t> sizes;
  try {
    const json meta = json::parse(r.get_string(len));
    pm.estimator = estimator_from_string(meta.at("estimator").get<std::string>());
    pm.w_tenths = meta.at("w_tenths").get<int>();
    pm.decision_threshold = meta.at("decision_threshold").get<double>();
    pm.reducer_fingerprint = meta.at("reducer_fingerprint").get<std::string>();
    pm.scaler_fingerprint = meta.at("scaler_fingerprint").get<std::string>();
    sizes = meta.at("model_sizes").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("pair: malformed metadata: ") + e.what());
  }
  if (pm.w_tenths < 0 || pm.w_tenths > kWeightSteps) throw DataError("pair: w out of range");
  if (!(pm.decision_threshold >= 0.0 && pm.decision_threshold <= 1.0)) {
    throw DataError("pair: decision threshold out of range");
  }
  if (sizes.size() != 2) throw DataError("pair: expected two models");
  pm.model_1 = decode_model(r.get_bytes(sizes[0]));
  pm.model_2 = decode_model(r.get_bytes(sizes[1]));
  if (r.remaining() != 0) throw DataError("pair: trailing bytes");
  if (pm.model_1.feature_count != pm.model_2.feature_count) {
    throw DataError("pair: models disagree on input dimensionality");
  }
  return pm;
}

}  // namespace pedetect
