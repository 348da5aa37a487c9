#include <algorithm>

#include "doctest.h"
#include "fixtures.hpp"
#include "pedetect/error.hpp"
#include "pedetect/metrics.hpp"
#include "pedetect/vote_pair.hpp"

using namespace pedetect;
using pedetect::testing::gaussian_store;

TEST_CASE("fuse arithmetic and bounds") {
  CHECK(fuse(0.8, 0.6, 0.5) == 0.7);
  CHECK(fuse(0.2, 0.9, 0.3) == 0.69);
  for (double p1 : {0.0, 0.13, 0.5, 1.0}) {
    for (double p2 : {0.0, 0.77, 1.0}) {
      CHECK(fuse(p1, p2, 1.0) == p1);
      CHECK(fuse(p1, p2, 0.0) == p2);
      for (int t = 0; t <= 10; ++t) {
        const double f = fuse(p1, p2, t / 10.0);
        CHECK(f >= std::min(p1, p2));
        CHECK(f <= std::max(p1, p2));
      }
    }
  }
  CHECK_THROWS_AS(fuse(1.2, 0.5, 0.5), DataError);
  CHECK_THROWS_AS(fuse(0.5, -0.1, 0.5), DataError);
  CHECK_THROWS_AS(fuse(0.5, 0.5, 1.5), DataError);
}

TEST_CASE("weight sweep selection rules") {
  const std::vector<std::int8_t> y = {1, 1, 1, 0, 0, 0, 1, 0};
  const std::vector<double> p = {0.9, 0.7, 0.4, 0.6, 0.2, 0.1, 0.8, 0.5};

  SUBCASE("identical models tie everywhere and pick the middle") {
    const auto r = sweep_weight(p, p, y);
    REQUIRE(r.points.size() == 11);
    for (int t = 0; t <= 10; ++t) {
      CHECK(r.points[t].w_tenths == t);
      CHECK(r.points[t].f1 == r.points[0].f1);
    }
    CHECK(r.w_tenths == 5);
  }

  const std::vector<double> perfect = {0.505, 0.505, 0.505, 0.495, 0.495, 0.495, 0.505, 0.495};

  SUBCASE("a constant partner never changes the ranking, so the tie rule decides") {
    const std::vector<double> flat(8, 0.5);
    const auto r = sweep_weight(perfect, flat, y);
    CHECK(r.points[0].f1 < 1.0);
    for (int t = 1; t <= 10; ++t) CHECK(r.points[t].f1 == 1.0);
    CHECK(r.w_tenths == 5);
  }

  SUBCASE("a near-constant partner that flips rankings forces w = 1") {
    // Any weight on model 2 moves a negative above a positive.
    const std::vector<double> adverse = {0.45, 0.45, 0.45, 0.55, 0.55, 0.55, 0.45, 0.55};
    const auto r = sweep_weight(perfect, adverse, y);
    CHECK(r.w_tenths == 10);
    CHECK(r.f1 == 1.0);
    for (int t = 0; t < 10; ++t) CHECK(r.points[t].f1 < 1.0);
  }

  SUBCASE("exactly anti-correlated partner") {
    std::vector<double> anti(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) anti[i] = 1.0 - p[i];
    const auto r = sweep_weight(p, anti, y);
    // Every w above 0.5 preserves model 1's ranking.
    for (int t = 6; t <= 10; ++t) CHECK(r.points[t].f1 == r.points[10].f1);
    CHECK(r.points[10].f1 > r.points[0].f1);
    CHECK(r.w_tenths == 6);
  }

  SUBCASE("noisy anti-correlated partner") {
    const std::vector<double> strong = {0.9, 0.8, 0.7, 0.62, 0.3, 0.2, 0.66, 0.1};
    std::vector<double> anti(strong.size());
    for (std::size_t i = 0; i < strong.size(); ++i) anti[i] = 1.0 - strong[i];
    anti[3] = 0.9;  // model 2 also ranks the hardest negative high
    const auto r = sweep_weight(strong, anti, y);
    CHECK(r.w_tenths == 10);
  }

  SUBCASE("selected F1 dominates the endpoints") {
    const std::vector<double> q = {0.3, 0.9, 0.2, 0.1, 0.6, 0.3, 0.5, 0.2};
    const auto r = sweep_weight(p, q, y);
    CHECK(r.f1 >= r.points[0].f1);
    CHECK(r.f1 >= r.points[10].f1);
    CHECK(r.threshold == r.points[r.w_tenths].threshold);
  }

  const std::vector<std::int8_t> one(8, 1);
  CHECK_THROWS_AS(sweep_weight(p, p, one), DataError);
}

TEST_CASE("pair prediction") {
  const auto data = gaussian_store(200, 3, 5, 1.0);
  Hyperparams hp;
  hp.n_trees = 10;
  PairModel pm;
  pm.model_1 = train(data.features, data.labels, Variant::gbdt, hp, 1);
  hp.max_depth = 2;
  pm.model_2 = train(data.features, data.labels, Variant::gbdt, hp, 2);
  pm.w_tenths = 0;
  const auto row = data.features.row(0);
  CHECK(predict(pm, row).score == pm.model_2.predict_proba(row));
  pm.w_tenths = 3;
  const auto v = predict(pm, row);
  pm.decision_threshold = v.score;
  CHECK(predict(pm, row).malicious);
  pm.decision_threshold = std::nextafter(v.score, 1.0);
  CHECK_FALSE(predict(pm, row).malicious);

  const auto batch = predict(pm, data.features);
  const auto scores = predict_scores(pm, data.features);
  REQUIRE(batch.size() == data.n_rows());
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    const auto one = predict(pm, data.features.row(i));
    CHECK(batch[i].score == one.score);
    CHECK(batch[i].malicious == one.malicious);
    CHECK(scores[i] == one.score);
  }
  CHECK_THROWS_AS(predict(pm, std::vector<float>(2)), DataError);

  const auto back = decode_pair(encode_pair(pm));
  CHECK(back == pm);
  auto bytes = encode_pair(pm);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_pair(bytes), DataError);
}

TEST_CASE("pair training") {
  const auto a = gaussian_store(300, 5, 1, 0.4, "a");
  const auto b = gaussian_store(300, 5, 2, 0.4, "b");
  const auto val = gaussian_store(200, 5, 3, 0.4, "v");
  PairTrainParams params;
  params.budget.max_trials = 3;

  SUBCASE("overlapping partitions are rejected") {
    try {
      train_pair(a, a, val, Estimator::lgbm, params);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("300") != std::string::npos);
    }
  }

  SUBCASE("identical partitions and seeds give identical models") {
    auto copy = a;
    for (auto& s : copy.sha256) s[0] ^= 0xFF;
    params.seed_2 = params.seed_1;
    const auto r = train_pair(a, copy, val, Estimator::xgb, params);
    CHECK(r.model.model_1 == r.model.model_2);
    for (std::size_t i = 1; i < r.sweep.points.size(); ++i) CHECK(r.sweep.points[i].f1 == r.sweep.points[0].f1);
    CHECK(r.model.w_tenths == 5);
  }

  SUBCASE("fusion keeps up with its parts") {
    for (auto est : kAllEstimators) {
      CAPTURE(to_string(est));
      const auto r = train_pair(a, b, val, est, params);
      const double a1 = auc(r.model.model_1.predict_proba(val.features), val.labels);
      const double a2 = auc(r.model.model_2.predict_proba(val.features), val.labels);
      const double fused = auc(predict_scores(r.model, val.features), val.labels);
      CHECK(fused >= std::max(a1, a2) - 0.01);
      CHECK(r.log_1.trials.size() == 3);
      CHECK(r.model.decision_threshold >= 0.0);
      CHECK(r.model.decision_threshold <= 1.0);
    }
  }
}
