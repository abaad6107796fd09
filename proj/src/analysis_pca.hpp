#pragma once

#include <array>
#include <string>
#include <vector>

#include "common.hpp"
#include "dataset_store.hpp"

namespace probeforge::pca {

struct PcaModel {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // orthonormal rows
  std::vector<double> explained_variance;       // non-increasing, sample covariance eigenvalues
};

// Principal axes of the sample covariance. Each component's largest-magnitude
// entry is made positive. Fails if the data has no variance at all.
PcaModel fit_pca(const Matrix<double>& x, std::size_t n_components = 2);
PcaModel fit_pca(const Matrix<float>& x, std::size_t n_components = 2);

Matrix<double> transform(const PcaModel& model, const Matrix<double>& x);
Matrix<double> transform(const PcaModel& model, const Matrix<float>& x);

struct ProjectedSample {
  std::string dataset;
  std::string sample_id;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

struct LayerProjection {
  std::vector<ProjectedSample> samples;
  std::vector<double> explained_variance;
};

// Stacks one layer of every bundle (in order) and projects onto the first two
// principal axes. Names label the rows; they default to the manifest names.
LayerProjection project_layer(std::span<const dataset::Bundle* const> bundles, int layer,
                              std::span<const std::string> names = {});

// dataset,sample_id,pc1,pc2
std::string to_csv(const std::vector<ProjectedSample>& rows);

}  // namespace probeforge::pca
