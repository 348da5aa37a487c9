#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pedetect/matrix.hpp"

namespace pedetect {

enum class Variant { gbdt, random_forest, extra_trees };

/// Tree growth policy for gbdt: level by level up to max_depth, or best-first
/// up to max_leaves (still bounded by max_depth).
enum class Growth { depthwise, leafwise };

/// The four estimator families trained in pairs. lgbm and xgb share the
/// gbdt engine and differ only in growth policy.
enum class Estimator { lgbm, xgb, rf, et };

inline constexpr Estimator kAllEstimators[] = {Estimator::lgbm, Estimator::xgb, Estimator::rf,
                                               Estimator::et};

std::string_view to_string(Variant v);
std::string_view to_string(Growth g);
std::string_view to_string(Estimator e);
Variant variant_from_string(std::string_view s);
Growth growth_from_string(std::string_view s);
Estimator estimator_from_string(std::string_view s);
Variant variant_of(Estimator e);

struct Hyperparams {
  int n_trees = 100;
  int max_depth = 6;
  int max_leaves = 31;
  double learning_rate = 0.1;     // gbdt
  double min_child_weight = 1.0;  // hessian sum (gbdt) or row weight (forests) per child
  double lambda = 1.0;            // gbdt L2 leaf penalty
  double min_split_gain = 0.0;
  double feature_subsample = 1.0;  // gbdt: fraction of features drawn per tree
  double row_subsample = 1.0;      // gbdt: rows drawn per tree; random_forest: bootstrap size
  int max_bins = 255;
  Growth growth = Growth::depthwise;

  /// Throws ConfigError naming the first out-of-range field.
  void validate() const;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Pinned defaults per estimator.
Hyperparams default_hyperparams(Estimator e);

struct TreeNode {
  std::int32_t feature = -1;  // -1 for leaves
  float threshold = 0.0f;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double leaf_value = 0.0;
  double split_gain = 0.0;

  bool is_leaf() const { return left < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Nodes of one tree; index 0 is the root.
using Tree = std::vector<TreeNode>;

struct Ensemble {
  Variant variant = Variant::gbdt;
  Hyperparams hp;
  std::uint64_t seed = 0;
  std::size_t feature_count = 0;
  double base_score = 0.0;  // gbdt log-odds prior
  double learning_rate = 1.0;
  std::vector<Tree> trees;

  /// Probability of the positive class. `n_trees` limits the number of trees
  /// used (staged prediction); 0 means all.
  double predict_proba(std::span<const float> x, std::size_t n_trees = 0) const;
  std::vector<double> predict_proba(const Matrix& x, std::size_t n_trees = 0) const;

  /// Total split gain per feature; zero for features never split on.
  std::vector<double> feature_gains() const;

  friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

struct GradHess {
  double g;
  double h;
};

/// Gradient and hessian of the logistic loss with respect to the raw score.
GradHess logistic_grad_hess(int y, double score);

double sigmoid(double z);

/// Trains one ensemble. Deterministic given (x, y, variant, hp, seed). Throws
/// DataError on single-class or malformed labels and ConfigError on bad
/// hyperparameters.
Ensemble train(const Matrix& x, std::span<const std::int8_t> y, Variant variant,
               const Hyperparams& hp, std::uint64_t seed);

Ensemble train(const Matrix& x, std::span<const std::int8_t> y, Estimator estimator,
               const Hyperparams& hp, std::uint64_t seed);

/// model.bin: "TENS", u32 version, u32 header length, JSON header (variant,
/// hyperparameters, seed, feature_count, base_score, learning_rate, per-tree
/// node counts), then for every node: i32 feature, f32 threshold, i32 left,
/// i32 right, f64 leaf_value, f64 split_gain. Little-endian.
std::vector<std::uint8_t> encode_model(const Ensemble& e);
Ensemble decode_model(std::span<const std::uint8_t> bytes);

std::string hyperparams_to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const std::string& text);

}  // namespace pedetect
