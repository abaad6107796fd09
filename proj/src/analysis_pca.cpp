#include "analysis_pca.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "text_format.hpp"

namespace probeforge::pca {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
RowMatrix to_eigen(const Matrix<T>& x) {
  RowMatrix m(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(x(i, j));
  return m;
}

PcaModel fit_impl(const RowMatrix& x, std::size_t n_components) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (n_components == 0) throw Error(ErrorKind::kArgument, "n_components must be >= 1");
  if (n_components > d)
    throw Error(ErrorKind::kArgument, "n_components exceeds the feature dimension");
  if (n <= n_components)
    throw Error(ErrorKind::kArgument, "PCA needs more rows (" + std::to_string(n) +
                                          ") than components (" + std::to_string(n_components) + ")");

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorKind::kValidation, "covariance eigendecomposition did not converge");

  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const double top = std::max(values(values.size() - 1), 0.0);
  const double tol = top * 1e-12 * static_cast<double>(d);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) > tol && values(i) > 0.0) ++rank;
  if (rank == 0)
    throw Error(ErrorKind::kValidation, "data is rank-deficient: achieved rank 0, " +
                                            std::to_string(n_components) + " components requested");

  PcaModel model;
  model.mean.assign(mean.data(), mean.data() + d);
  for (std::size_t c = 0; c < n_components; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    if (v(arg) < 0) v = -v;
    model.components.emplace_back(v.data(), v.data() + d);
    model.explained_variance.push_back(std::max(values(col), 0.0));
  }
  return model;
}

Matrix<double> transform_impl(const PcaModel& model, const RowMatrix& x) {
  const auto d = static_cast<Eigen::Index>(model.mean.size());
  if (x.cols() != d)
    throw Error(ErrorKind::kMismatch, "PCA input has " + std::to_string(x.cols()) +
                                          " columns, model expects " + std::to_string(d));
  const auto k = static_cast<Eigen::Index>(model.components.size());
  Eigen::Map<const Eigen::RowVectorXd> mean(model.mean.data(), d);
  Eigen::MatrixXd basis(d, k);
  for (Eigen::Index c = 0; c < k; ++c)
    basis.col(c) = Eigen::Map<const Eigen::VectorXd>(model.components[c].data(), d);
  const RowMatrix projected = (x.rowwise() - mean) * basis;
  Matrix<double> out(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < projected.rows(); ++i)
    for (Eigen::Index c = 0; c < k; ++c)
      out(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = projected(i, c);
  return out;
}

}  // namespace

PcaModel fit_pca(const Matrix<double>& x, std::size_t n_components) {
  return fit_impl(to_eigen(x), n_components);
}

PcaModel fit_pca(const Matrix<float>& x, std::size_t n_components) {
  return fit_impl(to_eigen(x), n_components);
}

Matrix<double> transform(const PcaModel& model, const Matrix<double>& x) {
  return transform_impl(model, to_eigen(x));
}

Matrix<double> transform(const PcaModel& model, const Matrix<float>& x) {
  return transform_impl(model, to_eigen(x));
}

LayerProjection project_layer(std::span<const dataset::Bundle* const> bundles, int layer,
                              std::span<const std::string> names) {
  if (bundles.empty()) throw Error(ErrorKind::kArgument, "PCA needs at least one dataset");
  if (!names.empty() && names.size() != bundles.size())
    throw Error(ErrorKind::kArgument, "one name per dataset required");
  const std::size_t dim = bundles.front()->manifest.hidden_dim;
  std::size_t total = 0;
  for (const auto* b : bundles) {
    if (b->manifest.hidden_dim != dim)
      throw Error(ErrorKind::kMismatch, "PCA inputs differ in hidden_dim (" + std::to_string(dim) +
                                            " vs " + std::to_string(b->manifest.hidden_dim) + ")");
    total += b->manifest.n_samples;
  }
  Matrix<float> stacked(total, dim);
  std::size_t r = 0;
  for (const auto* b : bundles) {
    const auto block = dataset::slice_layer(*b, layer);
    std::copy(block.data().begin(), block.data().end(),
              stacked.data().begin() + static_cast<std::ptrdiff_t>(r * dim));
    r += block.rows();
  }
  const auto model = fit_pca(stacked, 2);
  const auto projected = transform(model, stacked);

  LayerProjection out;
  out.explained_variance = model.explained_variance;
  r = 0;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const std::string& name = names.empty() ? bundles[i]->manifest.dataset_name : names[i];
    for (const auto& s : bundles[i]->signals) {
      out.samples.push_back({name, s.id, projected(r, 0), projected(r, 1)});
      ++r;
    }
  }
  return out;
}

std::string to_csv(const std::vector<ProjectedSample>& rows) {
  std::string out = "dataset,sample_id,pc1,pc2\n";
  for (const auto& r : rows)
    out += csv_field(r.dataset) + "," + csv_field(r.sample_id) + "," + format_report(r.pc1) + "," + format_report(r.pc2) + "\n";
  return out;
}

}  // namespace probeforge::pca
