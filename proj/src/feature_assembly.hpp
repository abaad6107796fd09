#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "dataset_store.hpp"

namespace probeforge::features {

enum class Mode { kOneLayer, kSelected, kMultiLayer };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct AssemblyConfig {
  Mode mode = Mode::kOneLayer;
  int layer = 15;                              // one_layer / selected source layer
  std::vector<int> layers{13, 14, 15, 16, 17};  // multi_layer
  std::size_t k = 300;                         // selected
  bool include_agnostic = false;

  // Stable identifier used in report rows and file names, e.g. "selected_L15_k300".
  // Does not encode include_agnostic.
  std::string label() const;
  void validate() const;

  friend bool operator==(const AssemblyConfig&, const AssemblyConfig&) = default;
};

// Top-k hidden columns by |Pearson r| against the training targets.
struct SelectionMap {
  std::vector<std::size_t> source_columns;
  std::vector<double> scores;  // |r|, non-increasing

  // One "index score" pair per line after a header line.
  std::string to_text() const;
  static SelectionMap from_text(const std::string& text);

  friend bool operator==(const SelectionMap&, const SelectionMap&) = default;
};

// Everything needed to turn a bundle's rows into probe inputs: the config plus
// whatever was fitted on the source training rows.
struct FeatureLayout {
  AssemblyConfig config;
  TaskType task_type = TaskType::kMultipleChoice;
  std::size_t hidden_dim = 0;
  std::optional<SelectionMap> selection;

  std::size_t hidden_width() const;
  std::size_t width() const;
};

struct FeatureView {
  FeatureMatrix x;
  std::vector<double> targets;        // empty when projected without labels
  std::vector<std::size_t> rows;      // source row ids in the bundle
  std::size_t agnostic_start = 0;     // == x.cols() when no agnostic block
};

// Sample Pearson correlation; 0 when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

// Pearson r of every column against y in one streaming pass over rows.
std::vector<double> column_correlations(const Matrix<float>& x, std::span<const double> y);

SelectionMap fit_selection(const Matrix<float>& hidden_train, std::span<const double> labels,
                           std::size_t k);

struct TrainingSource {
  const dataset::Bundle* bundle = nullptr;
  std::span<const double> labels;        // full-length label vector of the bundle
  std::span<const std::size_t> rows;     // training rows
};

// Fits a layout on the concatenation of the sources' training rows.
FeatureLayout fit_layout(std::span<const TrainingSource> sources, const AssemblyConfig& config);

// Applies a fitted layout to rows of any compatible bundle. `labels` may be empty.
FeatureView project(const FeatureLayout& layout, const dataset::Bundle& bundle,
                    std::span<const std::size_t> rows, std::span<const double> labels);

// Row-concatenation of views with equal width.
FeatureView concat(std::span<const FeatureView> views);

struct Assembled {
  FeatureLayout layout;
  FeatureView train;
  FeatureView test;
};

Assembled assemble(const dataset::Bundle& bundle, std::span<const double> labels,
                   const dataset::Split& split, const AssemblyConfig& config);

}  // namespace probeforge::features
