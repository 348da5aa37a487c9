#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "brute_metrics.hpp"
#include "json.hpp"
#include "pe_stub.hpp"
#include "pedetect/dimred.hpp"
#include "pedetect/features.hpp"
#include "pedetect/forest.hpp"
#include "pedetect/histogram.hpp"
#include "pedetect/metrics.hpp"
#include "pedetect/pipeline.hpp"
#include "pedetect/rng.hpp"
#include "pedetect/scaler.hpp"
#include "pedetect/vote_pair.hpp"

using namespace pedetect;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

DatasetStore store_from(const Matrix& x) {
  DatasetStore s;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    s.append(x.row(i), static_cast<std::int8_t>(i % 2), sha256("acc/" + std::to_string(i)), "acc");
  }
  return s;
}

// 1 ---------------------------------------------------------------------------

std::vector<std::vector<std::uint8_t>> fuzz_corpus(std::size_t n) {
  Rng rng(2024);
  const testing::PeStub stub;
  std::vector<std::vector<std::uint8_t>> out;
  out.push_back({});
  out.push_back(stub.bytes);
  // Every prefix of the valid stub.
  for (std::size_t len = 1; len < stub.bytes.size(); ++len) {
    out.emplace_back(stub.bytes.begin(), stub.bytes.begin() + static_cast<std::ptrdiff_t>(len));
  }
  while (out.size() < n) {
    const auto kind = rng.index(4);
    std::vector<std::uint8_t> b;
    if (kind == 0) {
      b.resize(rng.index(8192));
      for (auto& v : b) v = static_cast<std::uint8_t>(rng.next());
    } else if (kind == 1) {
      // Stub with random byte flips, concentrated in the headers.
      b = stub.bytes;
      const auto flips = 1 + rng.index(16);
      for (std::size_t i = 0; i < flips; ++i) b[rng.index(0x180)] = static_cast<std::uint8_t>(rng.next());
    } else if (kind == 2) {
      // Stub with random 32-bit words written over header fields.
      b = stub.bytes;
      const auto words = 1 + rng.index(6);
      for (std::size_t i = 0; i < words; ++i) {
        const auto at = rng.index(0x180 - 4);
        const auto v = static_cast<std::uint32_t>(rng.next());
        std::memcpy(b.data() + at, &v, 4);
      }
      b.resize(rng.index(2) == 0 ? b.size() : rng.index(b.size() + 1));
    } else {
      // "MZ" followed by junk, with e_lfanew pointing somewhere plausible.
      b.resize(64 + rng.index(4096));
      for (auto& v : b) v = static_cast<std::uint8_t>(rng.next());
      b[0] = 'M';
      b[1] = 'Z';
      const auto lfanew = static_cast<std::uint32_t>(rng.index(b.size()));
      std::memcpy(b.data() + 0x3C, &lfanew, 4);
      if (lfanew + 4 <= b.size() && rng.index(2) == 0) std::memcpy(b.data() + lfanew, "PE\0\0", 4);
    }
    out.push_back(std::move(b));
  }
  return out;
}

Outcome criterion_1() {
  const auto corpus = fuzz_corpus(10000);
  const auto t0 = Clock::now();
  std::size_t bad = 0;
  for (const auto& bytes : corpus) {
    FeatureVector a;
    FeatureVector b;
    try {
      a = vectorize(bytes);
      b = vectorize(bytes);
    } catch (...) {
      ++bad;
      continue;
    }
    const auto va = a.values();
    const auto vb = b.values();
    const bool finite = std::all_of(va.begin(), va.end(), [](float v) { return std::isfinite(v); });
    const bool same = va.size() == vb.size() && std::memcmp(va.data(), vb.data(), va.size() * sizeof(float)) == 0;
    if (va.size() != kFeatureDim || !finite || !same) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && corpus.size() >= 10000 && secs < 60.0,
          std::to_string(corpus.size()) + " inputs, " + std::to_string(bad) + " failures, " +
              fmt("%.1f s", secs)};
}

// 2 ---------------------------------------------------------------------------

Outcome criterion_2() {
  Rng rng(7);
  double worst_median = 0.0;
  std::size_t out_of_range = 0;
  std::size_t non_monotone = 0;
  for (int m = 0; m < 50; ++m) {
    const std::size_t n = 1 + rng.index(400);
    const std::size_t d = 1 + rng.index(30);
    Matrix x(n, d);
    for (std::size_t j = 0; j < d; ++j) {
      const auto kind = rng.index(4);
      const double scale = std::exp(rng.uniform(-4.0, 6.0));
      for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        if (kind == 0) v = rng.normal() * scale;
        else if (kind == 1) v = static_cast<double>(rng.index(5));       // heavy ties
        else if (kind == 2) v = std::exp(rng.normal() * 2.0) * scale;    // skewed
        else v = 3.0;                                                    // constant
        x(i, j) = static_cast<float>(v);
      }
    }
    const auto store = store_from(x);
    const auto p = fit_scaler(store);
    std::vector<double> robust(n);
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = x(i, j);
      std::sort(col.begin(), col.end());
      if (!(linear_quantile(col, 0.75) - linear_quantile(col, 0.25) > 0.0)) continue;
      for (std::size_t i = 0; i < n; ++i) robust[i] = (x(i, j) - p.median[j]) / p.iqr_scale[j];
      std::sort(robust.begin(), robust.end());
      worst_median = std::max(worst_median, std::abs(linear_quantile(robust, 0.5)));
    }
    const auto y = transform(store, p);
    for (float v : y.values.data()) out_of_range += !(v >= 0.0f && v <= 1.0f);

    // Sorted probes reaching well beyond the training range.
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<float> probes(200);
      const double span = (p.post_max[j] - p.post_min[j] + 1.0) * p.iqr_scale[j];
      for (auto& v : probes) v = static_cast<float>(p.median[j] + rng.uniform(-3.0, 3.0) * span);
      std::sort(probes.begin(), probes.end());
      float prev = -1.0f;
      std::vector<float> row(d, 0.0f);
      for (float v : probes) {
        row[j] = v;
        const float out = transform_row(row, p)[j];
        out_of_range += !(out >= 0.0f && out <= 1.0f);
        non_monotone += out < prev;
        prev = out;
      }
    }
  }
  return {worst_median <= 1e-9 && out_of_range == 0 && non_monotone == 0,
          "max |robust median| " + fmt("%.2e", worst_median) + ", " + std::to_string(out_of_range) +
              " outputs outside [0,1], " + std::to_string(non_monotone) + " monotonicity violations"};
}

// 3 ---------------------------------------------------------------------------

Outcome criterion_3() {
  Rng rng(11);
  double worst_orth = 0.0;
  double worst_trace = 0.0;
  bool sorted = true;
  for (int m = 0; m < 30; ++m) {
    const std::size_t d = 1 + rng.index(64);
    const std::size_t n = 2 + rng.index(499);
    Matrix x(n, d);
    // Mixed column scales and a few exact linear dependencies.
    std::vector<double> scale(d);
    for (auto& s : scale) s = std::exp(rng.uniform(-2.0, 2.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x(i, j) = static_cast<float>(rng.normal() * scale[j]);
      if (d > 3) x(i, d - 1) = x(i, 0);
    }
    const std::size_t k = std::min(n, d);
    const auto p = fit_pca(x, k);
    for (std::size_t a = 0; a < k; ++a) {
      if (a > 0 && p.explained_variance[a] > p.explained_variance[a - 1]) sorted = false;
      for (std::size_t b = a; b < k; ++b) {
        const auto ca = p.component(a);
        const auto cb = p.component(b);
        const double dot = std::inner_product(ca.begin(), ca.end(), cb.begin(), 0.0);
        worst_orth = std::max(worst_orth, std::abs(dot - (a == b ? 1.0 : 0.0)));
      }
    }
    // Covariance trace from scratch.
    double trace = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
      mean /= static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) ss += (x(i, j) - mean) * (x(i, j) - mean);
      trace += ss / static_cast<double>(n - 1);
    }
    const double total = std::accumulate(p.explained_variance.begin(), p.explained_variance.end(), 0.0);
    worst_trace = std::max(worst_trace, std::abs(total - trace) / trace);
  }

  Matrix toy(3, 2);
  for (std::size_t i = 0; i < 3; ++i) toy(i, 0) = toy(i, 1) = static_cast<float>(i + 1);
  const auto tp = fit_pca(toy, 1);
  const double r = 1.0 / std::sqrt(2.0);
  const double toy_err = std::max(std::abs(tp.component(0)[0] - r), std::abs(tp.component(0)[1] - r));

  return {worst_orth <= 1e-8 && sorted && worst_trace <= 1e-8 && toy_err <= 1e-10,
          "orthonormality " + fmt("%.1e", worst_orth) + ", trace rel. error " + fmt("%.1e", worst_trace) +
              ", sorted " + (sorted ? "yes" : "no") + ", (1,1)/sqrt2 error " + fmt("%.1e", toy_err)};
}

// 4 ---------------------------------------------------------------------------

double log_loss(int y, double s) {
  const double softplus = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  return softplus - y * s;
}

Outcome criterion_4() {
  Rng rng(4);
  double worst_g = 0.0;
  double worst_h = 0.0;
  const double step = 1e-4;
  for (int i = 0; i < 1000; ++i) {
    const int y = static_cast<int>(rng.index(2));
    const double s = rng.uniform(-10.0, 10.0);
    const auto gh = logistic_grad_hess(y, s);
    const double lp = log_loss(y, s + step);
    const double l0 = log_loss(y, s);
    const double lm = log_loss(y, s - step);
    worst_g = std::max(worst_g, std::abs(gh.g - (lp - lm) / (2.0 * step)));
    worst_h = std::max(worst_h, std::abs(gh.h - (lp - 2.0 * l0 + lm) / (step * step)));
  }
  return {worst_g <= 1e-6 && worst_h <= 1e-6,
          "max |g - fd| " + fmt("%.1e", worst_g) + ", max |h - fd| " + fmt("%.1e", worst_h)};
}

// 5 ---------------------------------------------------------------------------

struct ExactSplit {
  int feature = -1;
  float threshold = 0.0f;
  double gain = 0.0;
};

double node_score(const hist::BinStats& s, const hist::SplitParams& p) {
  if (p.criterion == hist::Criterion::newton) return s.g * s.g / (s.h + p.lambda);
  if (s.h <= 0.0) return 0.0;
  return (s.g * s.g + (s.h - s.g) * (s.h - s.g)) / s.h;
}

// Sorts the raw values of every feature and tries a cut after each distinct value.
ExactSplit exact_split(const Matrix& x, const std::vector<hist::BinStats>& gh, const hist::SplitParams& p) {
  hist::BinStats total;
  for (const auto& s : gh) {
    total.g += s.g;
    total.h += s.h;
  }
  const bool newton = p.criterion == hist::Criterion::newton;
  const double parent = node_score(total, p);
  ExactSplit best;
  std::vector<std::size_t> order(x.rows());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, f) < x(b, f); });
    hist::BinStats left;
    for (std::size_t i = 0; i < order.size(); ++i) {
      left.g += gh[order[i]].g;
      left.h += gh[order[i]].h;
      if (i + 1 == order.size() || x(order[i + 1], f) == x(order[i], f)) continue;
      if (left.h < p.min_child_weight) continue;
      const hist::BinStats right{total.g - left.g, total.h - left.h};
      if (right.h < p.min_child_weight) continue;
      const double gain = newton ? 0.5 * (node_score(left, p) + node_score(right, p) - parent)
                                 : node_score(left, p) + node_score(right, p) - parent;
      if (gain > p.min_split_gain && gain > best.gain) best = {static_cast<int>(f), x(order[i], f), gain};
    }
  }
  return best;
}

Outcome criterion_5() {
  std::size_t agree = 0;
  std::size_t cases = 0;
  std::string first_failure;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t n = 50 + rng.index(1951);
    const std::size_t d = 2 + rng.index(10);
    Matrix x(n, d);
    for (std::size_t f = 0; f < d; ++f) {
      const std::size_t distinct = 2 + rng.index(254);
      std::vector<float> levels(distinct);
      for (auto& v : levels) v = static_cast<float>(rng.normal() * 10.0);
      for (std::size_t i = 0; i < n; ++i) x(i, f) = levels[rng.index(distinct)];
    }
    const auto bins = hist::BinnedMatrix::build(x, 255);
    std::vector<std::uint32_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0u);
    std::vector<int> features(d);
    std::iota(features.begin(), features.end(), 0);

    for (auto criterion : {hist::Criterion::newton, hist::Criterion::gini}) {
      // Dyadic statistics keep every partial sum exact, so both finders see
      // identical numbers and any disagreement is a real selection difference.
      std::vector<hist::BinStats> gh(n);
      for (auto& s : gh) {
        if (criterion == hist::Criterion::newton) {
          s = {static_cast<double>(static_cast<int>(rng.index(129)) - 64) / 64.0,
               static_cast<double>(1 + rng.index(64)) / 64.0};
        } else {
          const double w = static_cast<double>(1 + rng.index(4));
          s = {rng.index(2) == 0 ? 0.0 : w, w};
        }
      }
      hist::SplitParams params;
      params.criterion = criterion;
      hist::Histogram h(bins.total_bins());
      hist::build_histogram(bins, rows, gh, features, h);
      hist::BinStats total;
      for (const auto& s : gh) {
        total.g += s.g;
        total.h += s.h;
      }
      const auto dense = hist::best_split(bins, h, features, total, params);
      hist::SplitCandidate sparse;
      hist::SparseColumn col;
      for (int f : features) {
        col.gather(bins, rows, gh, f);
        const auto c = hist::best_split(bins, col, total, params);
        if (c.valid() && (!sparse.valid() || c.gain > sparse.gain)) sparse = c;
      }
      const auto exact = exact_split(x, gh, params);
      ++cases;
      const bool ok = dense.feature == exact.feature && dense.threshold == exact.threshold &&
                      sparse.feature == exact.feature && sparse.threshold == exact.threshold;
      agree += ok;
      if (!ok && first_failure.empty()) {
        first_failure = ", first mismatch at seed " + std::to_string(seed) + ": histogram (" +
                        std::to_string(dense.feature) + ", " + fmt("%g", dense.threshold) + ") exact (" +
                        std::to_string(exact.feature) + ", " + fmt("%g", exact.threshold) + ")";
      }
    }
  }
  return {agree == cases, std::to_string(agree) + "/" + std::to_string(cases) +
                              " (seed, criterion) cases agree over 20 seeds" + first_failure};
}

// 6 ---------------------------------------------------------------------------

Outcome criterion_6() {
  Rng rng(6);
  std::size_t auc_bad = 0;
  std::size_t f1_bad = 0;
  std::size_t fpr_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.index(199);
    std::vector<double> s(n);
    std::vector<std::int8_t> y(n);
    const bool coarse = t % 2 == 0;  // half the instances are tie-heavy
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::int8_t>(i < 2 ? i : rng.index(2));
      s[i] = coarse ? static_cast<double>(rng.index(8)) / 7.0 : rng.uniform();
    }
    auc_bad += auc(s, y) != testing::brute_auc(s, y);
    const auto f = best_f1(s, y);
    const auto b = testing::brute_best_f1(s, y);
    f1_bad += f.f1 != b.f1 || f.threshold != b.threshold;
    const auto n_neg = static_cast<double>(std::count(y.begin(), y.end(), 0));
    for (double target : {0.0, 0.001, 0.01, 0.05}) {
      const auto op = tpr_at_fpr(s, y, target);
      std::size_t fp = 0;
      for (std::size_t i = 0; i < n; ++i) fp += y[i] == 0 && s[i] >= op.threshold;
      fpr_bad += static_cast<double>(fp) / n_neg > target || op.fpr > target;
    }
  }
  return {auc_bad == 0 && f1_bad == 0 && fpr_bad == 0,
          "100 instances: " + std::to_string(auc_bad) + " AUC mismatches, " + std::to_string(f1_bad) +
              " best-F1 mismatches, " + std::to_string(fpr_bad) + " FPR overshoots"};
}

// 7 ---------------------------------------------------------------------------

Outcome criterion_7() {
  Rng rng(77);
  std::size_t endpoint_bad = 0;
  double worst_affine = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double p1 = rng.uniform();
    const double p2 = rng.uniform();
    endpoint_bad += fuse(p1, p2, 1.0) != p1 || fuse(p1, p2, 0.0) != p2;
    for (int k = 0; k <= 10; ++k) {
      const double w = k / 10.0;
      worst_affine = std::max(worst_affine, std::abs(fuse(p1, p2, w) - (p2 + w * (p1 - p2))));
    }
    // Second differences vanish for an affine map.
    const double a = rng.uniform(0.0, 0.5);
    const double b = a + 0.5;
    worst_affine = std::max(worst_affine,
                            std::abs(fuse(p1, p2, a) + fuse(p1, p2, b) - 2.0 * fuse(p1, p2, (a + b) / 2.0)));
  }
  std::vector<double> s1(60), s2(60);
  std::vector<std::int8_t> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    y[i] = static_cast<std::int8_t>(i % 2);
    s1[i] = std::clamp(0.5 + 0.2 * rng.normal() + 0.1 * y[i], 0.0, 1.0);
    s2[i] = std::clamp(0.5 + 0.2 * rng.normal() + 0.1 * y[i], 0.0, 1.0);
  }
  const auto sweep = sweep_weight(s1, s2, y);
  bool grid = sweep.points.size() == 11;
  for (std::size_t i = 0; grid && i < sweep.points.size(); ++i) {
    grid = sweep.points[i].w_tenths == static_cast<int>(i);
    std::vector<double> fused(60);
    for (std::size_t r = 0; r < 60; ++r) fused[r] = fuse(s1[r], s2[r], static_cast<double>(i) / 10.0);
    grid = grid && best_f1(fused, y).f1 == sweep.points[i].f1;
  }
  return {endpoint_bad == 0 && worst_affine <= 1e-12 && grid,
          std::to_string(endpoint_bad) + " endpoint failures, max affine residual " + fmt("%.1e", worst_affine) +
              ", sweep grid " + (grid ? "{0.0, ..., 1.0}" : "wrong")};
}

// 8, 9, 10 ---------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  double seconds = 0.0;
  std::vector<ReportRow> rows;
  double recall_128 = 0.0;
  double tpr_in = 0.0;
  double tpr_shift = 0.0;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SweepParams sweep_params(std::uint64_t seed, int trials) {
  SweepParams sp;
  sp.seed = seed;
  sp.max_trials = trials;
  return sp;
}

SeedRun run_seed(const fs::path& dir, std::uint64_t seed, int trials) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  Pipeline pipe(dir);
  pipe.set_verbose(false);
  SeedRun r;
  r.seed = seed;
  const auto t0 = Clock::now();
  // Corpus defaults: 10,000 rows, 2,381 columns, 40 planted.
  pipe.run({"synth", {{"seed", seed}}, {}, {"data.fvs", "data.info.json"}});
  pipe.run({"split", {{"seed", seed}}, {"data.fvs"}, {"split.json"}});
  pipe.run({"fit-scalers", {}, {"data.fvs", "split.json"}, {"scaler.json"}});
  const auto sp = sweep_params(seed, trials);
  r.rows = run_sweep(pipe, "data.fvs", "split.json", "scaler.json", sp);
  r.seconds = seconds_since(t0);

  const auto info = nlohmann::json::parse(read_text(dir / "data.info.json"));
  const auto planted = info.at("planted").get<std::vector<std::uint32_t>>();
  const auto reducer =
      load_reducer((dir / sweep_job_dir(sp, ReductionMethod::xgbfs, 128) / "reducer.json").string());
  const auto& mask = std::get<FeatureMask>(reducer.params);
  std::size_t hit = 0;
  for (auto p : planted) hit += std::binary_search(mask.indices.begin(), mask.indices.end(), p);
  r.recall_128 = static_cast<double>(hit) / static_cast<double>(planted.size());

  // Shifted copy of the test partition, scored by the XGBFS-384 LightGBM-style pair.
  const std::string reducer_384 = sweep_job_dir(sp, ReductionMethod::xgbfs, 384);
  const std::string job = reducer_384 + "/lgbm";
  pipe.run({"shift",
            {{"seed", seed}, {"zero_fraction", 0.1}, {"partition", "test"}},
            {"data.fvs", "split.json"},
            {"shift/test.fvs"}});
  pipe.run({"evaluate",
            {{"partition", "all"}, {"tag", "test-shifted"}},
            {"shift/test.fvs", "scaler.json", reducer_384 + "/reducer.json", job + "/pair.bin"},
            {"shift/report.json"}});
  r.tpr_in = report_from_json(read_text(dir / job / "report.json")).tpr_at_01pct_fpr;
  r.tpr_shift = report_from_json(read_text(dir / "shift/report.json")).tpr_at_01pct_fpr;
  return r;
}

Outcome criterion_8(const std::vector<SeedRun>& runs) {
  std::size_t ordered_seeds = 0;
  std::size_t fast = 0;
  std::size_t recall_ok = 0;
  std::string detail;
  for (const auto& r : runs) {
    std::map<std::pair<std::size_t, std::string>, double> pca;
    for (const auto& row : r.rows) {
      if (row.reduction == "PCA") pca[{row.dim, row.estimator}] = row.report.auc;
    }
    std::size_t wins = 0;
    std::size_t pairs = 0;
    for (const auto& row : r.rows) {
      if (row.reduction != "XGBFS") continue;
      ++pairs;
      wins += row.report.auc >= pca.at({row.dim, row.estimator});
    }
    ordered_seeds += pairs == 12 && wins == pairs;
    fast += r.rows.size() == 24 && r.seconds < 900.0;
    recall_ok += r.recall_128 >= 0.9;
    detail += " [seed " + std::to_string(r.seed) + ": " + fmt("%.0f s", r.seconds) + ", XGBFS>=PCA " +
              std::to_string(wins) + "/" + std::to_string(pairs) + ", recall " + fmt("%.3f", r.recall_128) + "]";
  }
  const std::size_t n = runs.size();
  return {n == 5 && ordered_seeds == n && fast == n && recall_ok == n,
          "ordering held in " + std::to_string(ordered_seeds) + "/" + std::to_string(n) + " seeds, " +
              std::to_string(fast) + " sweeps under 15 min, recall>=0.9 in " + std::to_string(recall_ok) +
              detail};
}

Outcome criterion_9(const std::vector<SeedRun>& runs) {
  std::size_t degraded = 0;
  std::string detail;
  for (const auto& r : runs) {
    degraded += r.tpr_shift < r.tpr_in;
    detail += " [seed " + std::to_string(r.seed) + ": " + fmt("%.4f", r.tpr_in) + " -> " + fmt("%.4f", r.tpr_shift) + "]";
  }
  return {runs.size() == 5 && degraded >= 4,
          "TPR@0.1%FPR dropped in " + std::to_string(degraded) + "/" + std::to_string(runs.size()) +
              " seeds" + detail};
}

Outcome criterion_10(const fs::path& small_dir, const fs::path& full_dir, int trials) {
  std::size_t replayed = 0;
  std::vector<std::string> differing;
  auto replay_all = [&](Pipeline& pipe, const std::vector<std::string>& paths) {
    for (const auto& p : paths) {
      ++replayed;
      const auto res = pipe.replay(p);
      differing.insert(differing.end(), res.differing.begin(), res.differing.end());
    }
  };

  // Every record of a small but complete pipeline.
  fs::remove_all(small_dir);
  fs::create_directories(small_dir);
  {
    Pipeline pipe(small_dir);
    pipe.set_verbose(false);
    pipe.run({"synth",
              {{"n_rows", 800}, {"n_dims", 200}, {"n_informative", 10}, {"n_dense_noise", 60},
               {"n_sparse_noise", 30}, {"seed", 5}},
              {},
              {"data.fvs", "data.info.json"}});
    pipe.run({"split", {{"seed", 5}}, {"data.fvs"}, {"split.json"}});
    pipe.run({"fit-scalers", {}, {"data.fvs", "split.json"}, {"scaler.json"}});
    SweepParams sp;
    sp.dims = {16, 32};
    sp.max_trials = 2;
    sp.seed = 5;
    run_sweep(pipe, "data.fvs", "split.json", "scaler.json", sp);
    pipe.run({"shift", {{"seed", 5}, {"partition", "test"}}, {"data.fvs", "split.json"}, {"shift.fvs"}});
    pipe.manifest().check_acyclic();
    std::vector<std::string> paths;
    for (const auto& rec : pipe.manifest().records()) paths.push_back(rec.path);
    replay_all(pipe, paths);
  }

  // One artifact per stage of the full-size run.
  {
    Pipeline pipe(full_dir);
    pipe.set_verbose(false);
    const auto sp = sweep_params(0, trials);
    const std::string x384 = sweep_job_dir(sp, ReductionMethod::xgbfs, 384);
    const std::string p128 = sweep_job_dir(sp, ReductionMethod::pca, 128);
    replay_all(pipe, {"data.fvs", "split.json", "scaler.json", p128 + "/reducer.bin", x384 + "/reducer.json",
                      x384 + "/lgbm/pair.bin", p128 + "/et/pair.bin", x384 + "/lgbm/report.json",
                      "shift/test.fvs", "shift/report.json", "sweep/report.csv"});
  }
  std::string detail = std::to_string(replayed) + " artifacts replayed, " + std::to_string(differing.size()) +
                       " differ";
  for (const auto& d : differing) detail += " " + d;
  return {differing.empty() && replayed > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string workdir = "acceptance-work";
  int trials = 3;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  bool quick = false;
  app.add_option("--workdir", workdir, "Scratch directory for pipeline runs");
  app.add_option("--trials", trials, "Tuner trials per model in the end-to-end sweeps");
  app.add_option("--seeds", seeds, "Corpus seeds for the end-to-end sweeps");
  app.add_flag("--quick", quick, "Skip the end-to-end checks (8, 9, 10)");
  CLI11_PARSE(app, argc, argv);

  std::vector<std::pair<int, std::function<Outcome()>>> fast = {
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4},
      {5, criterion_5}, {6, criterion_6}, {7, criterion_7},
  };
  bool all = true;
  auto report = [&](int id, const Outcome& o) {
    all = all && o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
  };
  auto guarded = [&](int id, const std::function<Outcome()>& fn) {
    try {
      report(id, fn());
    } catch (const std::exception& e) {
      report(id, {false, std::string("exception: ") + e.what()});
    }
  };
  for (const auto& [id, fn] : fast) guarded(id, fn);
  if (quick) return all ? 0 : 1;

  const fs::path root = fs::absolute(workdir);
  std::vector<SeedRun> runs;
  std::string run_error;
  for (auto seed : seeds) {
    try {
      runs.push_back(run_seed(root / ("seed-" + std::to_string(seed)), seed, trials));
      std::cerr << "seed " << seed << " done in " << fmt("%.0f s", runs.back().seconds) << std::endl;
    } catch (const std::exception& e) {
      run_error = std::string("seed ") + std::to_string(seed) + ": " + e.what();
      break;
    }
  }
  if (!run_error.empty()) {
    report(8, {false, run_error});
    report(9, {false, run_error});
  } else {
    guarded(8, [&] { return criterion_8(runs); });
    guarded(9, [&] { return criterion_9(runs); });
  }
  guarded(10, [&] {
    return criterion_10(root / "replay-small", root / ("seed-" + std::to_string(seeds.front())), trials);
  });
  return all ? 0 : 1;
}
