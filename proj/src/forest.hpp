#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace probeforge::forest {

// A CART node. Internal nodes route x[feature] < threshold to `left`.
// `value` is the mean target of the training rows routed here (bootstrap
// multiplicity included) and `cover` is how many there were.
struct Node {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
  std::uint64_t cover = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const Node&, const Node&) = default;
};

// Nodes stored in pre-order; root at index 0.
struct Tree {
  std::vector<Node> nodes;

  double predict(std::span<const float> x) const;
  std::size_t depth() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

enum class MaxFeatures { kSqrt, kAll };

struct Params {
  std::size_t n_trees = 200;
  std::size_t min_samples_leaf = 5;
  std::size_t max_depth = 0;  // 0 = unlimited
  MaxFeatures max_features = MaxFeatures::kSqrt;
  bool bootstrap = true;
  std::uint64_t seed = 42;

  friend bool operator==(const Params&, const Params&) = default;
};

// Throws Error(kValidation) when child indices, feature indices or the
// cover bookkeeping (parent = left + right) are inconsistent.
void validate_tree(const Tree& tree, std::size_t n_features);

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<Tree> trees, std::size_t n_features, Params params, double base_value);

  const std::vector<Tree>& trees() const noexcept { return trees_; }
  std::size_t n_features() const noexcept { return n_features_; }
  const Params& params() const noexcept { return params_; }
  // Mean training target.
  double base_value() const noexcept { return base_value_; }

  double predict_row(std::span<const float> x) const;
  std::vector<double> predict(const FeatureMatrix& x, std::size_t jobs = 1) const;

  void save(std::ostream& out) const;
  static ForestModel load(std::istream& in);
  void save(const std::filesystem::path& file) const;
  static ForestModel load(const std::filesystem::path& file);

  friend bool operator==(const ForestModel&, const ForestModel&) = default;

 private:
  std::vector<Tree> trees_;
  std::size_t n_features_ = 0;
  Params params_;
  double base_value_ = 0.0;
};

// Bootstrap-aggregated CART regression forest. Trees are built from
// independent RNG streams keyed by (seed, tree index), so the result does not
// depend on `jobs`.
ForestModel train(const FeatureMatrix& x, std::span<const double> y, const Params& params,
                  std::size_t jobs = 1);

}  // namespace probeforge::forest
