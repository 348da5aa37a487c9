#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pedetect/dataset.hpp"
#include "pedetect/forest.hpp"

namespace pedetect {

/// One searchable hyperparameter.
struct ParamRange {
  std::string name;  // Hyperparams field name
  double lo;
  double hi;
  bool log_scale;
  bool integer;
};

struct SearchSpace {
  Estimator estimator;
  std::vector<ParamRange> params;
};

/// Pinned per-estimator spaces. Forests search neither learning_rate nor
/// feature_subsample; extra trees also skip row_subsample (no bootstrap).
SearchSpace search_space(Estimator e);

/// Maps a point of the unit cube onto the space, starting from the
/// estimator's defaults for parameters the space does not cover.
Hyperparams config_at(const SearchSpace& space, std::span<const double> unit);

/// Shifted Halton sequence: point i (0-based) of a low-discrepancy stream
/// whose random shift is derived from `seed`. Prefix-stable in i.
std::vector<double> halton_point(std::size_t i, std::size_t dims, std::uint64_t seed);

struct Budget {
  int max_trials = 30;
  double max_seconds = 0.0;  // 0 disables the time budget
};

struct Trial {
  Hyperparams hp;
  double val_auc = 0.0;
  double wall_seconds = 0.0;
};

struct TrialLog {
  Estimator estimator = Estimator::lgbm;
  std::uint64_t seed = 0;
  std::vector<Trial> trials;  // sampling order
  std::size_t best_index = 0;

  const Trial& best() const { return trials.at(best_index); }
};

struct SearchResult {
  Hyperparams best;
  TrialLog log;
  Ensemble best_model;  // trained on train_data with `best` and the search seed
};

/// Samples configurations, trains each on `train_data` with `seed`, scores
/// by validation AUC and keeps the best (earliest on ties). Stops after
/// max_trials or once max_seconds has elapsed; a trial finishing past the
/// time budget is discarded. Throws ConfigError if no trial completes.
SearchResult search(const SearchSpace& space, const Budget& budget, const DatasetStore& train_data,
                    const DatasetStore& val_data, std::uint64_t seed);

/// Deterministic fields only (configs, scores, best index).
std::string trial_log_to_json(const TrialLog& log);
TrialLog trial_log_from_json(const std::string& text);

/// Wall-clock times, kept apart from the reproducible log.
std::string trial_timing_to_json(const TrialLog& log);

}  // namespace pedetect
