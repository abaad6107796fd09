#pragma once

#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "forest.hpp"

namespace probeforge::shap {

struct Attribution {
  std::vector<double> phi;
  double phi0 = 0.0;  // cover-weighted expected output
};

struct ShapRow {
  std::size_t feature = 0;
  double mean_abs = 0.0;
  bool agnostic = false;
};

struct ShapTable {
  std::vector<ShapRow> rows;  // mean_abs non-increasing, ties by feature index
  std::size_t n_samples = 0;

  // rank,feature,mean_shap,agnostic with labels "feature_<i>".
  std::string to_csv() const;
};

// Cover-weighted mean of the leaf values.
double expected_value(const forest::Tree& tree);

// Exact path-dependent TreeSHAP for one tree. Throws on inconsistent covers.
Attribution shap_tree(const forest::Tree& tree, std::span<const float> x, std::size_t n_features);

// Mean of the per-tree attributions, matching the forest's mean aggregation.
Attribution shap_forest(const forest::ForestModel& model, std::span<const float> x);
std::vector<Attribution> shap_forest(const forest::ForestModel& model, const FeatureMatrix& x,
                                     std::size_t jobs = 1);

// Per-feature mean |phi| over the attributions; features >= agnostic_start are flagged.
ShapTable mean_abs_table(std::span<const Attribution> attributions, std::size_t agnostic_start);

}  // namespace probeforge::shap
