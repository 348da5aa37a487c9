#include "pedetect/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <memory>
#include <numeric>

#include "json.hpp"

#include "pedetect/binary_io.hpp"
#include "pedetect/error.hpp"
#include "pedetect/histogram.hpp"
#include "pedetect/rng.hpp"

namespace pedetect {

using nlohmann::json;

namespace {

constexpr char kModelMagic[4] = {'T', 'E', 'N', 'S'};
constexpr std::uint32_t kModelVersion = 1;

// Cached parent histograms beyond this are rebuilt from rows instead.
constexpr std::size_t kHistogramBudgetBytes = std::size_t{256} << 20;

// Nodes with fewer rows are searched from their occupied bins only.
constexpr std::size_t kSparseRows = 256;

void check_range(bool ok, const char* field, const std::string& range) {
  if (!ok) throw ConfigError(std::string("hyperparameter ") + field + " out of range " + range);
}

void check_labels(std::span<const std::int8_t> y, std::size_t rows) {
  if (y.size() != rows) {
    throw DataError("label count " + std::to_string(y.size()) + " does not match " +
                    std::to_string(rows) + " rows");
  }
  std::size_t pos = 0;
  for (const auto v : y) {
    if (v != 0 && v != 1) throw DataError("training labels must be 0 or 1");
    pos += static_cast<std::size_t>(v);
  }
  if (pos == 0 || pos == y.size()) throw DataError("training labels contain a single class");
}

/// Draws `k` distinct values from [0, n) and returns them ascending.
std::vector<std::uint32_t> sample_sorted(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.index(n - i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

struct GrowConfig {
  Variant variant;
  hist::SplitParams split;
  Growth growth;
  int max_depth;
  int max_leaves;
  int mtry;  // forests: features tried per node
};

using HistPtr = std::unique_ptr<hist::Histogram>;

/// Recycles histogram buffers across nodes and trees. Buffers keep stale
/// contents; every reader only touches slices that were rebuilt.
class HistogramPool {
 public:
  explicit HistogramPool(std::size_t size) : size_(size) {}
  HistPtr acquire() {
    if (free_.empty()) return std::make_unique<hist::Histogram>(size_);
    HistPtr h = std::move(free_.back());
    free_.pop_back();
    return h;
  }
  void recycle(HistPtr h) {
    if (h) free_.push_back(std::move(h));
  }

 private:
  std::size_t size_;
  std::vector<HistPtr> free_;
};

struct Pending {
  std::int32_t node;
  std::size_t begin;
  std::size_t end;
  int depth;
  hist::BinStats total;
  hist::SplitCandidate best;
  HistPtr histogram;
};

class Grower {
 public:
  Grower(const hist::BinnedMatrix& bins, std::span<const hist::BinStats> gh,
         const GrowConfig& cfg, Rng* rng, HistogramPool* pool)
      : bins_(bins), gh_(gh), cfg_(cfg), rng_(rng), pool_(pool) {}

  /// Grows one tree over `rows` (ascending). For gbdt `features` is the
  /// per-tree feature sample; forests sample per node from `features`.
  Tree grow(std::vector<std::uint32_t> rows, std::vector<int> features,
            std::vector<int>& split_bins) {
    idx_ = std::move(rows);
    features_ = std::move(features);
    nodes_.clear();
    split_bins_.clear();

    Pending root{0, 0, idx_.size(), 0, {}, {}, nullptr};
    for (const auto r : idx_) {
      root.total.g += gh_[r].g;
      root.total.h += gh_[r].h;
    }
    add_node(root.total);
    evaluate(root, nullptr);

    if (cfg_.growth == Growth::depthwise) {
      std::deque<Pending> queue;
      queue.push_back(std::move(root));
      while (!queue.empty()) {
        Pending p = std::move(queue.front());
        queue.pop_front();
        if (!p.best.valid()) continue;
        auto [l, r] = split(p);
        queue.push_back(std::move(l));
        queue.push_back(std::move(r));
      }
    } else {
      // Highest gain first; equal gains go to the older node.
      auto worse = [](const Pending& a, const Pending& b) {
        if (a.best.gain != b.best.gain) return a.best.gain < b.best.gain;
        return a.node > b.node;
      };
      std::vector<Pending> heap;
      if (root.best.valid()) heap.push_back(std::move(root));
      int leaves = 1;
      while (!heap.empty() && leaves < cfg_.max_leaves) {
        std::pop_heap(heap.begin(), heap.end(), worse);
        Pending p = std::move(heap.back());
        heap.pop_back();
        auto [l, r] = split(p);
        ++leaves;
        for (Pending* c : {&l, &r}) {
          if (!c->best.valid()) continue;
          heap.push_back(std::move(*c));
          std::push_heap(heap.begin(), heap.end(), worse);
        }
      }
      for (auto& p : heap) release(p);
    }
    split_bins = split_bins_;
    return std::move(nodes_);
  }

 private:
  bool is_gbdt() const { return cfg_.variant == Variant::gbdt; }

  double leaf_value(const hist::BinStats& s) const {
    if (is_gbdt()) return -s.g / (s.h + cfg_.split.lambda);
    return s.h > 0.0 ? s.g / s.h : 0.0;
  }

  std::int32_t add_node(const hist::BinStats& total) {
    TreeNode n;
    n.leaf_value = leaf_value(total);
    nodes_.push_back(n);
    split_bins_.push_back(-1);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::span<const std::uint32_t> rows_of(const Pending& p) const {
    return {idx_.data() + p.begin, p.end - p.begin};
  }

  std::size_t histogram_bytes() const { return bins_.total_bins() * sizeof(hist::BinStats); }

  void release(Pending& p) {
    if (p.histogram) {
      held_bytes_ -= histogram_bytes();
      pool_->recycle(std::move(p.histogram));
    }
  }

  /// Finds the node's best split. For gbdt `ready` is the node's histogram
  /// when already known (null means build it).
  void evaluate(Pending& p, HistPtr ready) {
    p.best = {};
    if (p.depth >= cfg_.max_depth || p.end - p.begin < 2) {
      pool_->recycle(std::move(ready));
      return;
    }
    if (!is_gbdt()) {
      if (p.total.g <= 0.0 || p.total.g >= p.total.h) return;  // pure node
      p.best = forest_split(p);
      return;
    }
    if (p.end - p.begin < kSparseRows) {
      pool_->recycle(std::move(ready));
      for (const int f : features_) {
        column_.gather(bins_, rows_of(p), gh_, f);
        const auto c = hist::best_split(bins_, column_, p.total, cfg_.split);
        if (c.valid() && c.gain > p.best.gain) p.best = c;
      }
      return;
    }
    HistPtr hist = std::move(ready);
    if (!hist) {
      hist = pool_->acquire();
      hist::build_histogram(bins_, rows_of(p), gh_, features_, *hist);
    }
    p.best = hist::best_split(bins_, *hist, features_, p.total, cfg_.split);
    const bool children_evaluated = p.depth + 1 < cfg_.max_depth;
    if (p.best.valid() && children_evaluated &&
        held_bytes_ + histogram_bytes() <= kHistogramBudgetBytes) {
      held_bytes_ += histogram_bytes();
      p.histogram = std::move(hist);
    } else {
      pool_->recycle(std::move(hist));
    }
  }

  hist::SplitCandidate forest_split(const Pending& p) {
    std::vector<int> order = features_;
    rng_->shuffle(std::span<int>(order));

    hist::SplitCandidate best;
    int tried = 0;
    // Constant features do not count toward mtry.
    for (const int f : order) {
      if (tried >= cfg_.mtry) break;
      column_.gather(bins_, rows_of(p), gh_, f);
      int lo = -1;
      int hi = -1;
      const auto occupied = column_.bins();
      const auto stats = column_.stats();
      for (std::size_t i = 0; i < occupied.size(); ++i) {
        if (stats[i].h > 0.0) {
          if (lo < 0) lo = occupied[i];
          hi = occupied[i];
        }
      }
      if (lo == hi) continue;
      ++tried;
      hist::SplitCandidate c;
      if (cfg_.variant == Variant::random_forest) {
        c = hist::best_split(bins_, column_, p.total, cfg_.split);
      } else {
        const auto cuts = bins_.cuts(f);
        const double u = rng_->uniform(cuts[lo], cuts[hi]);
        // Snap down to the last cut below u: same partition of the node's rows.
        auto it = std::lower_bound(cuts.begin() + lo, cuts.begin() + hi + 1, u);
        int b = static_cast<int>(it - cuts.begin()) - 1;
        b = std::clamp(b, lo, hi - 1);
        c = hist::evaluate_cut(bins_, column_, b, p.total, cfg_.split);
      }
      if (c.valid() && (c.gain > best.gain || (c.gain == best.gain && c.feature < best.feature))) {
        best = c;
      }
    }
    return best;
  }

  std::pair<Pending, Pending> split(Pending& p) {
    const auto& best = p.best;
    const auto col = bins_.column(best.feature);
    const auto mid_it = std::stable_partition(
        idx_.begin() + p.begin, idx_.begin() + p.end,
        [&](std::uint32_t r) { return col[r] <= best.bin; });
    const auto mid = static_cast<std::size_t>(mid_it - idx_.begin());

    Pending l{add_node(best.left), p.begin, mid, p.depth + 1, best.left, {}, nullptr};
    Pending r{add_node(best.right), mid, p.end, p.depth + 1, best.right, {}, nullptr};
    TreeNode& n = nodes_[p.node];
    n.feature = best.feature;
    n.threshold = best.threshold;
    n.left = l.node;
    n.right = r.node;
    n.split_gain = best.gain;
    split_bins_[p.node] = best.bin;

    const bool dense_child = std::max(mid - p.begin, p.end - mid) >= kSparseRows;
    if (is_gbdt() && l.depth < cfg_.max_depth && dense_child) {
      // Build the smaller child; derive the other by subtraction when possible.
      Pending& small = (l.end - l.begin) <= (r.end - r.begin) ? l : r;
      Pending& large = &small == &l ? r : l;
      HistPtr small_hist = pool_->acquire();
      hist::build_histogram(bins_, rows_of(small), gh_, features_, *small_hist);
      HistPtr large_hist;
      if (p.histogram) {
        large_hist = pool_->acquire();
        hist::subtract_histogram(*p.histogram, *small_hist, bins_, features_, *large_hist);
      }
      release(p);
      evaluate(small, std::move(small_hist));
      evaluate(large, std::move(large_hist));
    } else {
      release(p);
      evaluate(l, nullptr);
      evaluate(r, nullptr);
    }
    return {std::move(l), std::move(r)};
  }

  const hist::BinnedMatrix& bins_;
  std::span<const hist::BinStats> gh_;
  GrowConfig cfg_;
  Rng* rng_;
  HistogramPool* pool_;
  std::vector<std::uint32_t> idx_;
  std::vector<int> features_;
  Tree nodes_;
  std::vector<int> split_bins_;
  hist::SparseColumn column_;
  std::size_t held_bytes_ = 0;
};

/// Leaf reached by a training row, following bin indices.
std::int32_t leaf_by_bins(const Tree& tree, const std::vector<int>& split_bins,
                          const hist::BinnedMatrix& bins, std::uint32_t row) {
  std::int32_t i = 0;
  while (!tree[i].is_leaf()) {
    const auto& n = tree[i];
    i = bins.column(n.feature)[row] <= split_bins[i] ? n.left : n.right;
  }
  return i;
}

Ensemble train_gbdt(const Matrix& x, std::span<const std::int8_t> y, const Hyperparams& hp,
                    std::uint64_t seed) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Ensemble e;
  e.variant = Variant::gbdt;
  e.hp = hp;
  e.seed = seed;
  e.feature_count = d;
  e.learning_rate = hp.learning_rate;
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  e.base_score = std::log(pos / (static_cast<double>(n) - pos));

  const auto bins = hist::BinnedMatrix::build(x, hp.max_bins);
  GrowConfig cfg{Variant::gbdt,
                 {hist::Criterion::newton, hp.lambda, hp.min_child_weight, hp.min_split_gain},
                 hp.growth,
                 hp.max_depth,
                 hp.max_leaves,
                 0};
  std::vector<double> score(n, e.base_score);
  std::vector<hist::BinStats> gh(n);
  HistogramPool pool(bins.total_bins());
  const std::size_t n_rows = std::max<std::size_t>(1, std::llround(hp.row_subsample * n));
  const std::size_t n_feat = std::max<std::size_t>(1, std::llround(hp.feature_subsample * d));

  for (int t = 0; t < hp.n_trees; ++t) {
    for (std::size_t r = 0; r < n; ++r) {
      const auto d1 = logistic_grad_hess(y[r], score[r]);
      gh[r] = {d1.g, d1.h};
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
    auto rows = sample_sorted(n, std::min(n_rows, n), rng);
    const auto feat_u = sample_sorted(d, std::min(n_feat, d), rng);
    std::vector<int> feats;
    for (const auto f : feat_u) {
      if (bins.n_bins(f) > 1) feats.push_back(static_cast<int>(f));  // constants never split
    }

    Grower grower(bins, gh, cfg, nullptr, &pool);
    std::vector<int> split_bins;
    Tree tree = grower.grow(std::move(rows), std::move(feats), split_bins);
    for (std::size_t r = 0; r < n; ++r) {
      score[r] += hp.learning_rate * tree[leaf_by_bins(tree, split_bins, bins, r)].leaf_value;
    }
    e.trees.push_back(std::move(tree));
  }
  return e;
}

Ensemble train_forest(const Matrix& x, std::span<const std::int8_t> y, Variant variant,
                      const Hyperparams& hp, std::uint64_t seed) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Ensemble e;
  e.variant = variant;
  e.hp = hp;
  e.seed = seed;
  e.feature_count = d;
  e.learning_rate = 1.0;
  e.base_score = 0.0;
  e.trees.resize(static_cast<std::size_t>(hp.n_trees));

  const auto bins = hist::BinnedMatrix::build(x, hp.max_bins);
  const GrowConfig cfg{variant,
                       {hist::Criterion::gini, 0.0, hp.min_child_weight, hp.min_split_gain},
                       Growth::depthwise,
                       hp.max_depth,
                       0,
                       std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))))};
  const std::size_t n_draws = std::max<std::size_t>(1, std::llround(hp.row_subsample * n));
  std::vector<int> candidates;
  for (std::size_t f = 0; f < d; ++f) {
    if (bins.n_bins(f) > 1) candidates.push_back(static_cast<int>(f));
  }

  // Each tree owns its RNG stream, so the result does not depend on scheduling.
#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < hp.n_trees; ++t) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<double> w(n, 0.0);
    if (variant == Variant::random_forest) {
      for (std::size_t i = 0; i < n_draws; ++i) w[rng.index(n)] += 1.0;
    } else {
      std::fill(w.begin(), w.end(), 1.0);
    }
    std::vector<hist::BinStats> gh(n);
    std::vector<std::uint32_t> rows;
    for (std::size_t r = 0; r < n; ++r) {
      gh[r] = {y[r] == 1 ? w[r] : 0.0, w[r]};
      if (w[r] > 0.0) rows.push_back(static_cast<std::uint32_t>(r));
    }
    HistogramPool pool(0);
    Grower grower(bins, gh, cfg, &rng, &pool);
    std::vector<int> split_bins;
    e.trees[static_cast<std::size_t>(t)] = grower.grow(std::move(rows), candidates, split_bins);
  }
  return e;
}

json hp_json(const Hyperparams& hp) {
  return {{"n_trees", hp.n_trees},
          {"max_depth", hp.max_depth},
          {"max_leaves", hp.max_leaves},
          {"learning_rate", hp.learning_rate},
          {"min_child_weight", hp.min_child_weight},
          {"lambda", hp.lambda},
          {"min_split_gain", hp.min_split_gain},
          {"feature_subsample", hp.feature_subsample},
          {"row_subsample", hp.row_subsample},
          {"max_bins", hp.max_bins},
          {"growth", std::string(to_string(hp.growth))}};
}

Hyperparams hp_from(const json& j) {
  Hyperparams hp;
  hp.n_trees = j.at("n_trees").get<int>();
  hp.max_depth = j.at("max_depth").get<int>();
  hp.max_leaves = j.at("max_leaves").get<int>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.min_child_weight = j.at("min_child_weight").get<double>();
  hp.lambda = j.at("lambda").get<double>();
  hp.min_split_gain = j.at("min_split_gain").get<double>();
  hp.feature_subsample = j.at("feature_subsample").get<double>();
  hp.row_subsample = j.at("row_subsample").get<double>();
  hp.max_bins = j.at("max_bins").get<int>();
  hp.growth = growth_from_string(j.at("growth").get<std::string>());
  return hp;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::gbdt: return "gbdt";
    case Variant::random_forest: return "random_forest";
    case Variant::extra_trees: return "extra_trees";
  }
  return "?";
}

std::string_view to_string(Growth g) { return g == Growth::depthwise ? "depthwise" : "leafwise"; }

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::lgbm: return "lgbm";
    case Estimator::xgb: return "xgb";
    case Estimator::rf: return "rf";
    case Estimator::et: return "et";
  }
  return "?";
}

Variant variant_from_string(std::string_view s) {
  for (auto v : {Variant::gbdt, Variant::random_forest, Variant::extra_trees}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

Growth growth_from_string(std::string_view s) {
  if (s == "depthwise") return Growth::depthwise;
  if (s == "leafwise") return Growth::leafwise;
  throw ConfigError("unknown growth policy '" + std::string(s) + "'");
}

Estimator estimator_from_string(std::string_view s) {
  for (auto e : kAllEstimators) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError("unknown estimator '" + std::string(s) + "' (expected lgbm, xgb, rf or et)");
}

Variant variant_of(Estimator e) {
  switch (e) {
    case Estimator::rf: return Variant::random_forest;
    case Estimator::et: return Variant::extra_trees;
    default: return Variant::gbdt;
  }
}

void Hyperparams::validate() const {
  check_range(n_trees >= 0 && n_trees <= 100000, "n_trees", "[0, 100000]");
  check_range(max_depth >= 1 && max_depth <= 64, "max_depth", "[1, 64]");
  check_range(max_leaves >= 2 && max_leaves <= 65536, "max_leaves", "[2, 65536]");
  check_range(learning_rate > 0.0 && learning_rate <= 1.0, "learning_rate", "(0, 1]");
  check_range(min_child_weight > 0.0 && std::isfinite(min_child_weight), "min_child_weight",
              "(0, inf)");
  check_range(lambda >= 0.0 && std::isfinite(lambda), "lambda", "[0, inf)");
  check_range(min_split_gain >= 0.0 && std::isfinite(min_split_gain), "min_split_gain",
              "[0, inf)");
  check_range(feature_subsample > 0.0 && feature_subsample <= 1.0, "feature_subsample",
              "(0, 1]");
  check_range(row_subsample > 0.0 && row_subsample <= 1.0, "row_subsample", "(0, 1]");
  check_range(max_bins >= 2 && max_bins <= 255, "max_bins", "[2, 255]");
}

Hyperparams default_hyperparams(Estimator e) {
  Hyperparams hp;
  switch (e) {
    case Estimator::lgbm:
      hp.growth = Growth::leafwise;
      break;
    case Estimator::xgb:
      hp.growth = Growth::depthwise;
      break;
    case Estimator::rf:
    case Estimator::et:
      hp.max_depth = 12;
      break;
  }
  return hp;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

GradHess logistic_grad_hess(int y, double score) {
  const double p = sigmoid(score);
  return {p - static_cast<double>(y), p * (1.0 - p)};
}

double Ensemble::predict_proba(std::span<const float> x, std::size_t n_trees) const {
  if (x.size() != feature_count) {
    throw DataError("input has " + std::to_string(x.size()) + " features, model expects " +
                    std::to_string(feature_count));
  }
  const std::size_t used = n_trees == 0 ? trees.size() : std::min(n_trees, trees.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < used; ++t) {
    const Tree& tree = trees[t];
    std::int32_t i = 0;
    while (!tree[i].is_leaf()) {
      i = x[tree[i].feature] <= tree[i].threshold ? tree[i].left : tree[i].right;
    }
    sum += tree[i].leaf_value;
  }
  if (variant == Variant::gbdt) return sigmoid(base_score + learning_rate * sum);
  if (used == 0) return 0.5;
  return std::clamp(sum / static_cast<double>(used), 0.0, 1.0);
}

std::vector<double> Ensemble::predict_proba(const Matrix& x, std::size_t n_trees) const {
  if (x.cols() != feature_count && x.rows() > 0) {
    throw DataError("input has " + std::to_string(x.cols()) + " features, model expects " +
                    std::to_string(feature_count));
  }
  std::vector<double> out(x.rows());
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) out[r] = predict_proba(x.row(r), n_trees);
  return out;
}

std::vector<double> Ensemble::feature_gains() const {
  std::vector<double> gains(feature_count, 0.0);
  for (const auto& tree : trees) {
    for (const auto& n : tree) {
      if (!n.is_leaf()) gains[n.feature] += n.split_gain;
    }
  }
  return gains;
}

Ensemble train(const Matrix& x, std::span<const std::int8_t> y, Variant variant,
               const Hyperparams& hp, std::uint64_t seed) {
  hp.validate();
  if (variant != Variant::gbdt && hp.n_trees < 1) {
    throw ConfigError("hyperparameter n_trees out of range [1, 100000] for forests");
  }
  if (x.cols() == 0) throw DataError("training matrix has no features");
  check_labels(y, x.rows());
  if (variant == Variant::gbdt) return train_gbdt(x, y, hp, seed);
  return train_forest(x, y, variant, hp, seed);
}

Ensemble train(const Matrix& x, std::span<const std::int8_t> y, Estimator estimator,
               const Hyperparams& hp, std::uint64_t seed) {
  Hyperparams h = hp;
  if (estimator == Estimator::lgbm) h.growth = Growth::leafwise;
  if (estimator == Estimator::xgb) h.growth = Growth::depthwise;
  return train(x, y, variant_of(estimator), h, seed);
}

std::vector<std::uint8_t> encode_model(const Ensemble& e) {
  json sizes = json::array();
  for (const auto& t : e.trees) sizes.push_back(t.size());
  const json header = {{"variant", std::string(to_string(e.variant))},
                       {"hyperparams", hp_json(e.hp)},
                       {"seed", e.seed},
                       {"feature_count", e.feature_count},
                       {"base_score", e.base_score},
                       {"learning_rate", e.learning_rate},
                       {"tree_sizes", sizes}};
  const std::string text = header.dump();

  ByteWriter w;
  w.put_string(std::string_view(kModelMagic, 4));
  w.put(kModelVersion);
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_string(text);
  for (const auto& t : e.trees) {
    for (const auto& n : t) {
      w.put(n.feature);
      w.put(n.threshold);
      w.put(n.left);
      w.put(n.right);
      w.put(n.leaf_value);
      w.put(n.split_gain);
    }
  }
  return std::move(w.bytes());
}

Ensemble decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "model");
  if (r.get_string(4) != std::string_view(kModelMagic, 4)) {
    throw DataError("model: bad magic (not a model file)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion) {
    throw DataError("model: unsupported version " + std::to_string(version));
  }
  const auto len = r.get<std::uint32_t>();
  Ensemble e;
  std::vector<std::size_t> sizes;
  try {
    const json h = json::parse(r.get_string(len));
    e.variant = variant_from_string(h.at("variant").get<std::string>());
    e.hp = hp_from(h.at("hyperparams"));
    e.seed = h.at("seed").get<std::uint64_t>();
    e.feature_count = h.at("feature_count").get<std::size_t>();
    e.base_score = h.at("base_score").get<double>();
    e.learning_rate = h.at("learning_rate").get<double>();
    sizes = h.at("tree_sizes").get<std::vector<std::size_t>>();
  } catch (const json::exception& ex) {
    throw DataError(std::string("model: malformed header: ") + ex.what());
  }
  for (const auto size : sizes) {
    if (size == 0) throw DataError("model: empty tree");
    Tree t(size);
    for (auto& n : t) {
      n.feature = r.get<std::int32_t>();
      n.threshold = r.get<float>();
      n.left = r.get<std::int32_t>();
      n.right = r.get<std::int32_t>();
      n.leaf_value = r.get<double>();
      n.split_gain = r.get<double>();
      const auto limit = static_cast<std::int32_t>(size);
      const bool leaf = n.left < 0;
      if (!leaf && (n.feature < 0 || static_cast<std::size_t>(n.feature) >= e.feature_count ||
                    n.left >= limit || n.right >= limit || n.right < 0)) {
        throw DataError("model: node references out of range");
      }
    }
    // Children always come after their parent, which rules out cycles.
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!t[i].is_leaf() && (t[i].left <= static_cast<std::int32_t>(i) ||
                              t[i].right <= static_cast<std::int32_t>(i))) {
        throw DataError("model: tree is not topologically ordered");
      }
    }
    e.trees.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw DataError("model: trailing bytes");
  return e;
}

std::string hyperparams_to_json(const Hyperparams& hp) { return hp_json(hp).dump(); }

Hyperparams hyperparams_from_json(const std::string& text) {
  try {
    return hp_from(json::parse(text));
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed hyperparameters: ") + ex.what());
  }
}

}  // namespace pedetect
