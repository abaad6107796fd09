#include "tree_shap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "parallel.hpp"
#include "text_format.hpp"

namespace probeforge::shap {
namespace {

using forest::Node;
using forest::Tree;

// One feature on the current root-to-node path: the fraction of "absent"
// paths flowing through (zero), whether x itself follows it (one), and the
// permutation weight for subsets of the given size.
struct PathElement {
  std::int64_t feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

void extend_path(PathElement* path, std::size_t depth, double zero_fraction, double one_fraction,
                 std::int64_t feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  const double denom = static_cast<double>(depth + 1);
  for (std::size_t i = depth; i-- > 0;) {
    path[i + 1].weight += one_fraction * path[i].weight * static_cast<double>(i + 1) / denom;
    path[i].weight = zero_fraction * path[i].weight * static_cast<double>(depth - i) / denom;
  }
}

void unwind_path(PathElement* path, std::size_t depth, std::size_t index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double denom = static_cast<double>(depth + 1);
  double next_one_portion = path[depth].weight;
  for (std::size_t i = depth; i-- > 0;) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next_one_portion * denom / (static_cast<double>(i + 1) * one);
      next_one_portion = tmp - path[i].weight * zero * static_cast<double>(depth - i) / denom;
    } else {
      path[i].weight = path[i].weight * denom / (zero * static_cast<double>(depth - i));
    }
  }
  for (std::size_t i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight if the element at `index` were removed.
double unwound_path_sum(const PathElement* path, std::size_t depth, std::size_t index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double denom = static_cast<double>(depth + 1);
  double next_one_portion = path[depth].weight;
  double total = 0.0;
  for (std::size_t i = depth; i-- > 0;) {
    if (one != 0.0) {
      const double tmp = next_one_portion * denom / (static_cast<double>(i + 1) * one);
      total += tmp;
      next_one_portion = path[i].weight - tmp * zero * (static_cast<double>(depth - i) / denom);
    } else if (zero != 0.0) {
      total += (path[i].weight / zero) / (static_cast<double>(depth - i) / denom);
    }
  }
  return total;
}

class TreeExplainer {
 public:
  TreeExplainer(const Tree& tree, std::span<const float> x, std::span<double> phi)
      : tree_(tree), x_(x), phi_(phi) {
    const std::size_t d = tree.depth() + 2;
    path_.resize(d * (d + 1) / 2 + d);
  }

  void run() { recurse(0, 0, path_.data(), 1.0, 1.0, -1); }

 private:
  void recurse(std::int32_t node_index, std::size_t depth, PathElement* parent_path,
               double parent_zero, double parent_one, std::int64_t parent_feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, parent_zero, parent_one, parent_feature);

    const Node& node = tree_.nodes[node_index];
    if (node.is_leaf()) {
      for (std::size_t i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path, depth, i);
        const PathElement& el = path[i];
        phi_[static_cast<std::size_t>(el.feature)] +=
            w * (el.one_fraction - el.zero_fraction) * node.value;
      }
      return;
    }

    const bool go_left = static_cast<double>(x_[static_cast<std::size_t>(node.feature)]) < node.threshold;
    const std::int32_t hot = go_left ? node.left : node.right;
    const std::int32_t cold = go_left ? node.right : node.left;
    const double cover = static_cast<double>(node.cover);
    const double hot_zero = static_cast<double>(tree_.nodes[hot].cover) / cover;
    const double cold_zero = static_cast<double>(tree_.nodes[cold].cover) / cover;
    double incoming_zero = 1.0;
    double incoming_one = 1.0;

    // A feature already on the path is undone and re-applied here.
    std::size_t k = 0;
    for (; k <= depth; ++k)
      if (path[k].feature == node.feature) break;
    if (k != depth + 1) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, depth, k);
      --depth;
    }

    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, node.feature);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, node.feature);
  }

  const Tree& tree_;
  std::span<const float> x_;
  std::span<double> phi_;
  std::vector<PathElement> path_;
};

void explain_into(const Tree& tree, std::span<const float> x, std::span<double> phi) {
  TreeExplainer(tree, x, phi).run();
}

}  // namespace

double expected_value(const Tree& tree) {
  const double root = static_cast<double>(tree.nodes.front().cover);
  double total = 0.0;
  for (const Node& n : tree.nodes)
    if (n.is_leaf()) total += n.value * (static_cast<double>(n.cover) / root);
  return total;
}

Attribution shap_tree(const Tree& tree, std::span<const float> x, std::size_t n_features) {
  forest::validate_tree(tree, n_features);
  if (x.size() != n_features)
    throw Error(ErrorKind::kMismatch, "row has " + std::to_string(x.size()) +
                                          " features, expected " + std::to_string(n_features));
  Attribution a;
  a.phi.assign(n_features, 0.0);
  a.phi0 = expected_value(tree);
  explain_into(tree, x, a.phi);
  return a;
}

Attribution shap_forest(const forest::ForestModel& model, std::span<const float> x) {
  const std::size_t p = model.n_features();
  if (x.size() != p)
    throw Error(ErrorKind::kMismatch, "row has " + std::to_string(x.size()) +
                                          " features, model expects " + std::to_string(p));
  Attribution a;
  a.phi.assign(p, 0.0);
  std::vector<double> tree_phi(p);
  for (const auto& tree : model.trees()) {
    std::fill(tree_phi.begin(), tree_phi.end(), 0.0);
    explain_into(tree, x, tree_phi);
    for (std::size_t j = 0; j < p; ++j) a.phi[j] += tree_phi[j];
    a.phi0 += expected_value(tree);
  }
  const double t = static_cast<double>(model.trees().size());
  for (double& v : a.phi) v /= t;
  a.phi0 /= t;
  return a;
}

std::vector<Attribution> shap_forest(const forest::ForestModel& model, const FeatureMatrix& x,
                                     std::size_t jobs) {
  if (x.cols() != model.n_features())
    throw Error(ErrorKind::kMismatch, "matrix has " + std::to_string(x.cols()) +
                                          " columns, model expects " +
                                          std::to_string(model.n_features()));
  std::vector<Attribution> out(x.rows());
  parallel_for(x.rows(), jobs, [&](std::size_t i) { out[i] = shap_forest(model, x.row(i)); });
  return out;
}

ShapTable mean_abs_table(std::span<const Attribution> attributions, std::size_t agnostic_start) {
  if (attributions.empty()) throw Error(ErrorKind::kArgument, "no attributions to summarize");
  const std::size_t p = attributions.front().phi.size();
  std::vector<double> sums(p, 0.0);
  for (const auto& a : attributions) {
    if (a.phi.size() != p) throw Error(ErrorKind::kMismatch, "attributions differ in length");
    for (std::size_t j = 0; j < p; ++j) sums[j] += std::abs(a.phi[j]);
  }
  ShapTable table;
  table.n_samples = attributions.size();
  table.rows.resize(p);
  const double n = static_cast<double>(attributions.size());
  for (std::size_t j = 0; j < p; ++j) table.rows[j] = {j, sums[j] / n, j >= agnostic_start};
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const ShapRow& a, const ShapRow& b) { return a.mean_abs > b.mean_abs; });
  return table;
}

std::string ShapTable::to_csv() const {
  std::string out = "rank,feature,mean_shap,agnostic\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += std::to_string(i + 1) + ",feature_" + std::to_string(rows[i].feature) + "," +
           format_exact(rows[i].mean_abs) + "," + (rows[i].agnostic ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace probeforge::shap
