#include "pedetect/tuner.hpp"

#include <chrono>
#include <cmath>

#include "json.hpp"
#include "pedetect/error.hpp"
#include "pedetect/metrics.hpp"
#include "pedetect/rng.hpp"

namespace pedetect {

using nlohmann::json;

namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

double radical_inverse(std::size_t i, int base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

void assign(Hyperparams& hp, const std::string& name, double v) {
  if (name == "n_trees") hp.n_trees = static_cast<int>(v);
  else if (name == "max_depth") hp.max_depth = static_cast<int>(v);
  else if (name == "max_leaves") hp.max_leaves = static_cast<int>(v);
  else if (name == "learning_rate") hp.learning_rate = v;
  else if (name == "min_child_weight") hp.min_child_weight = v;
  else if (name == "feature_subsample") hp.feature_subsample = v;
  else if (name == "row_subsample") hp.row_subsample = v;
  else throw ConfigError("unknown search parameter " + name);
}

}  // namespace

SearchSpace search_space(Estimator e) {
  const ParamRange trees{"n_trees", 50, 600, true, true};
  const ParamRange depth{"max_depth", 3, 12, false, true};
  const ParamRange leaves{"max_leaves", 15, 255, false, true};
  const ParamRange lr{"learning_rate", 0.01, 0.3, true, false};
  const ParamRange mcw{"min_child_weight", 0.5, 20, false, false};
  const ParamRange fs{"feature_subsample", 0.5, 1.0, false, false};
  const ParamRange rs{"row_subsample", 0.6, 1.0, false, false};
  switch (e) {
    case Estimator::lgbm: return {e, {trees, depth, leaves, lr, mcw, fs, rs}};
    case Estimator::xgb: return {e, {trees, depth, lr, mcw, fs, rs}};
    case Estimator::rf: return {e, {trees, depth, mcw, rs}};
    case Estimator::et: return {e, {trees, depth, mcw}};
  }
  throw ConfigError("unknown estimator");
}

Hyperparams config_at(const SearchSpace& space, std::span<const double> unit) {
  if (unit.size() != space.params.size()) throw ConfigError("search point has wrong dimension");
  Hyperparams hp = default_hyperparams(space.estimator);
  for (std::size_t i = 0; i < unit.size(); ++i) {
    const auto& p = space.params[i];
    const double u = std::clamp(unit[i], 0.0, 1.0);
    double v;
    if (p.log_scale) {
      v = std::exp(std::log(p.lo) + u * (std::log(p.hi) - std::log(p.lo)));
      if (p.integer) v = std::round(v);
    } else if (p.integer) {
      v = std::floor(p.lo + u * (p.hi - p.lo + 1.0));
    } else {
      v = p.lo + u * (p.hi - p.lo);
    }
    assign(hp, p.name, std::clamp(v, p.lo, p.hi));
  }
  return hp;
}

std::vector<double> halton_point(std::size_t i, std::size_t dims, std::uint64_t seed) {
  if (dims > std::size(kPrimes)) throw ConfigError("search space has too many dimensions");
  Rng rng(mix_seed(seed, 0x4a17u));
  std::vector<double> out(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const double shift = rng.uniform();
    double v = radical_inverse(i + 1, kPrimes[d]) + shift;
    out[d] = v - std::floor(v);
  }
  return out;
}

SearchResult search(const SearchSpace& space, const Budget& budget, const DatasetStore& train_data,
                    const DatasetStore& val_data, std::uint64_t seed) {
  if (budget.max_trials < 1) throw ConfigError("tuner budget max_trials must be positive");
  if (budget.max_seconds < 0.0) throw ConfigError("tuner budget max_seconds must be >= 0");
  if (val_data.n_rows() == 0) throw DataError("tuner needs a non-empty validation set");
  if (val_data.n_dims() != train_data.n_dims()) {
    throw DataError("train and validation data differ in dimensionality");
  }

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  SearchResult result;
  result.log.estimator = space.estimator;
  result.log.seed = seed;
  for (int t = 0; t < budget.max_trials; ++t) {
    if (budget.max_seconds > 0.0 &&
        std::chrono::duration<double>(Clock::now() - start).count() >= budget.max_seconds) {
      break;
    }
    const auto unit = halton_point(static_cast<std::size_t>(t), space.params.size(), seed);
    Trial trial;
    trial.hp = config_at(space, unit);
    const auto t0 = Clock::now();
    Ensemble model = train(train_data.features, train_data.labels, space.estimator, trial.hp, seed);
    trial.hp = model.hp;  // growth policy is fixed by the estimator
    trial.val_auc = auc(model.predict_proba(val_data.features), val_data.labels);
    const auto t1 = Clock::now();
    trial.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    if (budget.max_seconds > 0.0 &&
        std::chrono::duration<double>(t1 - start).count() > budget.max_seconds) {
      break;
    }
    auto& trials = result.log.trials;
    trials.push_back(trial);
    if (trials.size() == 1 || trial.val_auc > trials[result.log.best_index].val_auc) {
      result.log.best_index = trials.size() - 1;
      result.best_model = std::move(model);
    }
  }
  if (result.log.trials.empty()) {
    throw ConfigError("tuner completed no trials within " + std::to_string(budget.max_seconds) +
                      " s; raise --max-seconds or set it to 0 to disable the time budget");
  }
  result.best = result.log.best().hp;
  return result;
}

std::string trial_log_to_json(const TrialLog& log) {
  json trials = json::array();
  for (const auto& t : log.trials) {
    trials.push_back({{"hyperparams", json::parse(hyperparams_to_json(t.hp))},
                      {"val_auc", t.val_auc}});
  }
  const json j = {{"estimator", std::string(to_string(log.estimator))},
                  {"seed", log.seed},
                  {"best_index", log.best_index},
                  {"objective", "val_auc"},
                  {"trials", trials}};
  return j.dump(1) + "\n";
}

TrialLog trial_log_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    TrialLog log;
    log.estimator = estimator_from_string(j.at("estimator").get<std::string>());
    log.seed = j.at("seed").get<std::uint64_t>();
    log.best_index = j.at("best_index").get<std::size_t>();
    for (const auto& t : j.at("trials")) {
      Trial trial;
      trial.hp = hyperparams_from_json(t.at("hyperparams").dump());
      trial.val_auc = t.at("val_auc").get<double>();
      log.trials.push_back(trial);
    }
    if (log.best_index >= log.trials.size()) throw DataError("tuner log: best_index out of range");
    return log;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed tuner log: ") + e.what());
  }
}

std::string trial_timing_to_json(const TrialLog& log) {
  json times = json::array();
  for (const auto& t : log.trials) times.push_back(t.wall_seconds);
  return json{{"wall_seconds", times}}.dump(1) + "\n";
}

}  // namespace pedetect
