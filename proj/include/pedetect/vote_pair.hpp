#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pedetect/dataset.hpp"
#include "pedetect/forest.hpp"
#include "pedetect/matrix.hpp"
#include "pedetect/tuner.hpp"

namespace pedetect {

/// w * p1 + (1 - w) * p2, clamped to [min(p1, p2), max(p1, p2)] so rounding
/// never leaves the hull. Throws DataError on arguments outside [0, 1].
double fuse(double p1, double p2, double w);

inline constexpr int kWeightSteps = 10;  // w in tenths: 0, 1, ..., 10

struct PairModel {
  Estimator estimator = Estimator::lgbm;
  Ensemble model_1;
  Ensemble model_2;
  int w_tenths = 5;
  double decision_threshold = 0.5;
  std::string reducer_fingerprint;
  std::string scaler_fingerprint;

  double w() const { return w_tenths / 10.0; }
  std::size_t n_dims() const { return model_1.feature_count; }

  friend bool operator==(const PairModel&, const PairModel&) = default;
};

struct SweepPoint {
  int w_tenths = 0;
  double f1 = 0.0;
  double threshold = 0.0;
};

struct SweepResult {
  int w_tenths = 5;
  double threshold = 0.5;
  double f1 = 0.0;
  std::vector<SweepPoint> points;  // one per grid value, ascending w
};

/// Evaluates best-F1 of the fused scores at every w on the 0.1 grid and
/// keeps the best; ties go to the w closest to 0.5, then the smaller w.
SweepResult sweep_weight(std::span<const double> p1, std::span<const double> p2,
                         std::span<const std::int8_t> labels);
SweepResult sweep_weight(const Ensemble& m1, const Ensemble& m2, const DatasetStore& val);

struct Verdict {
  double score = 0.0;
  bool malicious = false;
};

Verdict predict(const PairModel& pm, std::span<const float> x);
std::vector<Verdict> predict(const PairModel& pm, const Matrix& x);
std::vector<double> predict_scores(const PairModel& pm, const Matrix& x);

struct PairTrainParams {
  Budget budget;
  std::uint64_t seed_1 = 1;
  std::uint64_t seed_2 = 2;
};

struct PairTrainResult {
  PairModel model;
  TrialLog log_1;
  TrialLog log_2;
  SweepResult sweep;
};

/// Throws DataError naming how many sha256 identities two partitions share.
void check_disjoint(const DatasetStore& a, const DatasetStore& b, const std::string& a_name,
                    const std::string& b_name);

/// Tunes and trains one instance per training partition, then picks w and
/// the decision threshold on `val`.
PairTrainResult train_pair(const DatasetStore& train_a, const DatasetStore& train_b,
                           const DatasetStore& val, Estimator estimator,
                           const PairTrainParams& params);

/// pair.bin: "PAIR", u32 version, u32 metadata length, metadata JSON
/// (estimator, w_tenths, threshold, fingerprints, model sizes), then both
/// model.bin payloads.
std::vector<std::uint8_t> encode_pair(const PairModel& pm);
PairModel decode_pair(std::span<const std::uint8_t> bytes);

}  // namespace pedetect
