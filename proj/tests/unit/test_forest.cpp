#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pedetect/error.hpp"
#include "pedetect/forest.hpp"
#include "pedetect/histogram.hpp"
#include "pedetect/metrics.hpp"
#include "pedetect/rng.hpp"

using namespace pedetect;

namespace {

struct Data {
  Matrix x;
  std::vector<std::int8_t> y;
};

Data two_gaussians(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Data out{Matrix(n, d), std::vector<std::int8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.y[i] = static_cast<std::int8_t>(i % 2);
    const double shift = out.y[i] == 1 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < d; ++j) out.x(i, j) = static_cast<float>(rng.normal() + shift);
  }
  return out;
}

Data xor_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Data out{Matrix(n, 2), std::vector<std::int8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = rng.index(2);
    const auto b = rng.index(2);
    out.x(i, 0) = static_cast<float>(a);
    out.x(i, 1) = static_cast<float>(b);
    out.y[i] = static_cast<std::int8_t>(a ^ b);
  }
  return out;
}

double log_loss(const std::vector<double>& p, const std::vector<std::int8_t>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s -= y[i] == 1 ? std::log(p[i]) : std::log1p(-p[i]);
  return s / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("logistic gradient and hessian") {
  const auto a = logistic_grad_hess(1, 0.0);
  CHECK(a.g == -0.5);
  CHECK(a.h == 0.25);
  const auto b = logistic_grad_hess(0, 40.0);
  CHECK(b.g == doctest::Approx(1.0));
  CHECK(b.h < 1e-15);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("gbdt separates two Gaussians") {
  const auto d = two_gaussians(2000, 20, 0);
  Hyperparams hp;
  hp.n_trees = 100;
  hp.max_depth = 4;
  const auto e = train(d.x, d.y, Variant::gbdt, hp, 0);
  CHECK(auc(e.predict_proba(d.x), d.y) >= 0.99);

  double prev = std::log(2.0);
  for (std::size_t t = 1; t <= 100; ++t) {
    const double cur = log_loss(e.predict_proba(d.x, t), d.y);
    CHECK(cur <= prev + 1e-9);
    prev = cur;
  }
}

TEST_CASE("every variant learns XOR") {
  const auto d = xor_data(400, 1);
  for (auto est : kAllEstimators) {
    CAPTURE(to_string(est));
    auto hp = default_hyperparams(est);
    hp.n_trees = 50;
    hp.max_depth = 3;
    const auto e = train(d.x, d.y, est, hp, 3);
    const auto p = e.predict_proba(d.x);
    std::size_t right = 0;
    for (std::size_t i = 0; i < p.size(); ++i) right += (p[i] >= 0.5) == (d.y[i] == 1);
    CHECK(static_cast<double>(right) / static_cast<double>(p.size()) >= 0.95);
    for (double v : p) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("training is deterministic") {
  const auto d = two_gaussians(500, 6, 2);
  for (auto est : kAllEstimators) {
    auto hp = default_hyperparams(est);
    hp.n_trees = 20;
    hp.feature_subsample = est == Estimator::lgbm || est == Estimator::xgb ? 0.7 : 1.0;
    hp.row_subsample = 0.8;
    CHECK(train(d.x, d.y, est, hp, 11) == train(d.x, d.y, est, hp, 11));
  }
}

TEST_CASE("degenerate ensembles") {
  SUBCASE("no trees on a balanced prior") {
    const auto d = two_gaussians(100, 3, 1);
    Hyperparams hp;
    hp.n_trees = 0;
    const auto e = train(d.x, d.y, Variant::gbdt, hp, 0);
    CHECK(e.predict_proba(d.x.row(0)) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("unsplittable single-tree forest keeps the leaf fraction") {
    Matrix x(4, 2, 1.0f);
    const std::vector<std::int8_t> y = {1, 1, 0, 1};
    Hyperparams hp = default_hyperparams(Estimator::et);
    hp.n_trees = 1;
    const auto e = train(x, y, Variant::extra_trees, hp, 0);
    CHECK(e.predict_proba(x.row(0)) == 0.75);
  }
  SUBCASE("pure-positive leaves give 1") {
    const auto d = xor_data(200, 4);
    auto hp = default_hyperparams(Estimator::rf);
    hp.n_trees = 10;
    const auto e = train(d.x, d.y, Variant::random_forest, hp, 0);
    std::vector<float> pos = {1, 0};
    CHECK(e.predict_proba(pos) == 1.0);
  }
}

TEST_CASE("feature gains") {
  Ensemble e;
  e.variant = Variant::gbdt;
  e.feature_count = 5;
  Tree t(3);
  t[0].feature = 2;
  t[0].left = 1;
  t[0].right = 2;
  t[0].split_gain = 1.7;
  e.trees.push_back(t);
  CHECK(e.feature_gains() == std::vector<double>{0, 0, 1.7, 0, 0});

  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Data d{Matrix(300, 10), std::vector<std::int8_t>(300)};
    for (auto& v : d.x.data()) v = static_cast<float>(rng.normal());
    for (std::size_t i = 0; i < 300; ++i) d.y[i] = d.x(i, 7) > 0.0f;
    Hyperparams hp;
    hp.n_trees = 30;
    const auto g = train(d.x, d.y, Variant::gbdt, hp, seed).feature_gains();
    CHECK(std::max_element(g.begin(), g.end()) - g.begin() == 7);
  }
}

TEST_CASE("input validation") {
  const auto d = two_gaussians(50, 3, 1);
  std::vector<std::int8_t> one(50, 1);
  CHECK_THROWS_AS(train(d.x, one, Variant::gbdt, Hyperparams{}, 0), DataError);
  Hyperparams bad;
  bad.learning_rate = 2.0;
  try {
    train(d.x, d.y, Variant::gbdt, bad, 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
  const auto e = train(d.x, d.y, Variant::gbdt, Hyperparams{}, 0);
  CHECK_THROWS_AS(e.predict_proba(std::vector<float>(2)), DataError);
}

TEST_CASE("model encoding round trips") {
  const auto d = two_gaussians(300, 4, 8);
  for (auto est : kAllEstimators) {
    auto hp = default_hyperparams(est);
    hp.n_trees = 5;
    const auto e = train(d.x, d.y, est, hp, 1);
    const auto bytes = encode_model(e);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TENS");
    CHECK(decode_model(bytes) == e);
    auto cut = bytes;
    cut.resize(cut.size() / 2);
    CHECK_THROWS_AS(decode_model(cut), DataError);
  }
  Hyperparams hp;
  hp.growth = Growth::leafwise;
  hp.max_leaves = 63;
  CHECK(hyperparams_from_json(hyperparams_to_json(hp)) == hp);
}

TEST_CASE("sparse split search agrees with the histogram") {
  Rng rng(3);
  Matrix x(600, 5);
  for (auto& v : x.data()) v = static_cast<float>(rng.index(40));
  const auto bins = hist::BinnedMatrix::build(x, 255);
  std::vector<hist::BinStats> gh(600);
  for (auto& s : gh) s = {rng.normal(), 0.25 + rng.uniform()};
  std::vector<std::uint32_t> rows;
  for (std::uint32_t i = 0; i < 600; i += 3) rows.push_back(i);
  const std::vector<int> features = {0, 1, 2, 3, 4};
  hist::Histogram h(bins.total_bins());
  hist::build_histogram(bins, rows, gh, features, h);
  hist::BinStats total;
  for (auto r : rows) {
    total.g += gh[r].g;
    total.h += gh[r].h;
  }
  const hist::SplitParams params;
  const auto dense = hist::best_split(bins, h, features, total, params);
  hist::SplitCandidate best;
  hist::SparseColumn col;
  for (int f : features) {
    col.gather(bins, rows, gh, f);
    const auto c = hist::best_split(bins, col, total, params);
    if (c.valid() && (!best.valid() || c.gain > best.gain)) best = c;
    for (int b : {0, 7, 20}) {
      const auto a = hist::evaluate_cut(bins, h, f, b, total, params);
      const auto s = hist::evaluate_cut(bins, col, b, total, params);
      CHECK(a.gain == s.gain);
    }
  }
  CHECK(best.feature == dense.feature);
  CHECK(best.bin == dense.bin);
  CHECK(best.gain == dense.gain);
}
