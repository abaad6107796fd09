#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dataset_store.hpp"
#include "feature_assembly.hpp"
#include "forest.hpp"

namespace probeforge {

// A trained probe: the source-fitted feature layout plus the forest. Applying
// it to another dataset reuses the source layout unchanged.
struct Probe {
  std::vector<std::string> sources;  // training dataset names
  features::FeatureLayout layout;
  forest::ForestModel model;

  std::vector<double> score(const features::FeatureView& view, std::size_t jobs = 1) const;
  features::FeatureView view(const dataset::Bundle& bundle, std::span<const std::size_t> rows,
                             std::span<const double> labels) const;

  void save(std::ostream& out) const;
  static Probe load(std::istream& in);
  void save(const std::filesystem::path& file) const;
  static Probe load(const std::filesystem::path& file);
};

struct ProbeSource {
  const dataset::Bundle* bundle = nullptr;
  std::span<const double> labels;
  const dataset::Split* split = nullptr;
};

// Fits the layout on the union of the sources' training rows and trains the forest
// on their row-wise concatenation.
Probe train_probe(std::span<const ProbeSource> sources, const features::AssemblyConfig& config,
                  const forest::Params& params, std::size_t jobs = 1);

}  // namespace probeforge
