#include "forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "parallel.hpp"
#include "random.hpp"
#include "text_format.hpp"

namespace probeforge::forest {
namespace {

constexpr const char* kForestHeader = "probeforge-forest";
constexpr int kForestVersion = 1;

std::size_t candidate_count(MaxFeatures rule, std::size_t p) {
  if (rule == MaxFeatures::kAll) return p;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p)))));
}

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const double> y, const Params& params,
              std::uint64_t stream_seed)
      : x_(x), y_(y), params_(params), rng_(stream_seed), features_(x.cols()) {
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    mtry_ = candidate_count(params.max_features, x.cols());
    min_leaf_ = std::max<std::size_t>(1, params.min_samples_leaf);
  }

  Tree build() {
    const std::size_t n = x_.rows();
    rows_.resize(n);
    if (params_.bootstrap) {
      for (auto& r : rows_) r = rng_.below(n);
    } else {
      std::iota(rows_.begin(), rows_.end(), std::size_t{0});
    }
    scratch_.reserve(n);
    grow(0, n, 0);
    return std::move(tree_);
  }

 private:
  struct Best {
    double gain = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    bool found = false;
  };

  std::int32_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t n = end - begin;
    const auto index = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    double sum = 0.0, lo = y_[rows_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = y_[rows_[i]];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = sum / static_cast<double>(n);
    {
      Node& node = tree_.nodes[index];
      node.value = std::clamp(mean, lo, hi);
      node.cover = n;
    }

    const bool depth_capped = params_.max_depth > 0 && depth >= params_.max_depth;
    if (n < 2 * min_leaf_ || depth_capped || lo == hi) return index;

    double sse = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double d = y_[rows_[i]] - mean;
      sse += d * d;
    }

    const Best best = find_split(begin, end, mean, sse);
    if (!best.found) return index;

    auto mid_it = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                 rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                 [&](std::size_t r) {
                                   return static_cast<double>(x_(r, best.feature)) < best.threshold;
                                 });
    const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());

    const std::int32_t left = grow(begin, mid, depth + 1);
    const std::int32_t right = grow(mid, end, depth + 1);
    Node& node = tree_.nodes[index];
    node.feature = static_cast<std::int32_t>(best.feature);
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    return index;
  }

  // Draws candidate features without replacement. After the first `mtry`
  // candidates, keeps drawing only while no valid split has been found.
  Best find_split(std::size_t begin, std::size_t end, double mean, double sse) {
    Best best;
    const std::size_t p = features_.size();
    const double min_gain = 1e-12 * sse;
    for (std::size_t t = 0; t < p; ++t) {
      if (t >= mtry_ && best.found) break;
      std::swap(features_[t], features_[t + rng_.below(p - t)]);
      evaluate_feature(features_[t], begin, end, mean, min_gain, best);
    }
    return best;
  }

  void evaluate_feature(std::size_t f, std::size_t begin, std::size_t end, double mean,
                        double min_gain, Best& best) {
    scratch_.clear();
    for (std::size_t i = begin; i < end; ++i)
      scratch_.emplace_back(x_(rows_[i], f), y_[rows_[i]] - mean);
    std::sort(scratch_.begin(), scratch_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (scratch_.front().first == scratch_.back().first) return;

    const std::size_t n = scratch_.size();
    const double total = static_cast<double>(n);
    double left_sum = 0.0;  // centred target sum; the right side carries its negation
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_sum += scratch_[i].second;
      const std::size_t n_left = i + 1;
      if (n_left < min_leaf_) continue;
      if (n - n_left < min_leaf_) break;
      if (scratch_[i].first == scratch_[i + 1].first) continue;
      const double nl = static_cast<double>(n_left);
      const double gain = left_sum * left_sum * total / (nl * (total - nl));
      if (gain > min_gain && (!best.found || gain > best.gain)) {
        best.found = true;
        best.gain = gain;
        best.feature = f;
        best.threshold =
            0.5 * (static_cast<double>(scratch_[i].first) + static_cast<double>(scratch_[i + 1].first));
      }
    }
  }

  const FeatureMatrix& x_;
  std::span<const double> y_;
  const Params& params_;
  rng::Rng rng_;
  std::vector<std::size_t> features_;
  std::vector<std::size_t> rows_;
  std::vector<std::pair<float, double>> scratch_;
  std::size_t mtry_ = 1;
  std::size_t min_leaf_ = 1;
  Tree tree_;
};

// Line-oriented reader that reports the line number on failure.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::vector<std::string> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      std::istringstream ss(line);
      std::vector<std::string> tokens;
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return tokens;
    }
    fail("unexpected end of file");
  }

  std::vector<std::string> expect(const std::string& key, std::size_t n_values) {
    auto t = next();
    if (t.front() != key || t.size() != n_values + 1)
      fail("expected '" + key + "' with " + std::to_string(n_values) + " value(s)");
    return t;
  }

  double real(const std::string& token) const {
    try {
      return parse_double(token);
    } catch (const Error& e) {
      fail(e.what());
    }
  }

  template <typename Int>
  Int integer(const std::string& token) const {
    try {
      return parse_int<Int>(token);
    } catch (const Error& e) {
      fail(e.what());
    }
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorKind::kCorrupt,
                "forest model, line " + std::to_string(line_no_) + ": " + why);
  }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

std::int32_t read_subtree(Reader& reader, Tree& tree, std::size_t& remaining) {
  if (remaining == 0) reader.fail("tree has more nodes than declared");
  --remaining;
  const auto t = reader.next();
  const auto index = static_cast<std::int32_t>(tree.nodes.size());
  tree.nodes.emplace_back();
  Node& node = tree.nodes[index];
  if (t[0] == "L" && t.size() == 3) {
    node.value = reader.real(t[1]);
    node.cover = reader.integer<std::uint64_t>(t[2]);
    return index;
  }
  if (t[0] != "S" || t.size() != 5) reader.fail("expected a node record ('S' or 'L')");
  node.feature = reader.integer<std::int32_t>(t[1]);
  node.threshold = reader.real(t[2]);
  node.cover = reader.integer<std::uint64_t>(t[3]);
  node.value = reader.real(t[4]);
  const std::int32_t left = read_subtree(reader, tree, remaining);
  const std::int32_t right = read_subtree(reader, tree, remaining);
  tree.nodes[index].left = left;
  tree.nodes[index].right = right;
  return index;
}

void write_subtree(std::ostream& out, const Tree& tree, std::int32_t index) {
  const Node& n = tree.nodes[index];
  if (n.is_leaf()) {
    out << "L " << format_exact(n.value) << ' ' << n.cover << '\n';
    return;
  }
  out << "S " << n.feature << ' ' << format_exact(n.threshold) << ' ' << n.cover << ' '
      << format_exact(n.value) << '\n';
  write_subtree(out, tree, n.left);
  write_subtree(out, tree, n.right);
}

}  // namespace

double Tree::predict(std::span<const float> x) const {
  std::int32_t i = 0;
  while (!nodes[i].is_leaf()) {
    const Node& n = nodes[i];
    i = static_cast<double>(x[static_cast<std::size_t>(n.feature)]) < n.threshold ? n.left : n.right;
  }
  return nodes[i].value;
}

std::size_t Tree::depth() const {
  if (nodes.empty()) return 0;
  std::function<std::size_t(std::int32_t)> rec = [&](std::int32_t i) -> std::size_t {
    const Node& n = nodes[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(rec(n.left), rec(n.right));
  };
  return rec(0);
}

void validate_tree(const Tree& tree, std::size_t n_features) {
  if (tree.nodes.empty()) throw Error(ErrorKind::kValidation, "tree has no nodes");
  const auto count = static_cast<std::int32_t>(tree.nodes.size());
  std::vector<int> parents(tree.nodes.size(), 0);
  for (std::int32_t i = 0; i < count; ++i) {
    const Node& n = tree.nodes[i];
    if (n.cover == 0)
      throw Error(ErrorKind::kValidation, "node " + std::to_string(i) + " has zero cover");
    if (n.is_leaf()) continue;
    if (static_cast<std::size_t>(n.feature) >= n_features)
      throw Error(ErrorKind::kValidation, "node " + std::to_string(i) + " splits on feature " +
                                              std::to_string(n.feature) + " >= " +
                                              std::to_string(n_features));
    if (n.left <= i || n.right <= i || n.left >= count || n.right >= count || n.left == n.right)
      throw Error(ErrorKind::kValidation, "node " + std::to_string(i) + " has invalid children");
    ++parents[n.left];
    ++parents[n.right];
    if (tree.nodes[n.left].cover + tree.nodes[n.right].cover != n.cover)
      throw Error(ErrorKind::kValidation,
                  "inconsistent covers at node " + std::to_string(i) + ": " +
                      std::to_string(n.cover) + " != " + std::to_string(tree.nodes[n.left].cover) +
                      " + " + std::to_string(tree.nodes[n.right].cover));
  }
  for (std::int32_t i = 1; i < count; ++i)
    if (parents[i] != 1)
      throw Error(ErrorKind::kValidation, "node " + std::to_string(i) + " is not referenced exactly once");
}

ForestModel::ForestModel(std::vector<Tree> trees, std::size_t n_features, Params params,
                         double base_value)
    : trees_(std::move(trees)), n_features_(n_features), params_(params), base_value_(base_value) {
  if (trees_.empty()) throw Error(ErrorKind::kArgument, "a forest needs at least one tree");
  for (const auto& t : trees_) validate_tree(t, n_features_);
}

double ForestModel::predict_row(std::span<const float> x) const {
  if (x.size() != n_features_)
    throw Error(ErrorKind::kMismatch, "row has " + std::to_string(x.size()) +
                                          " features, model expects " +
                                          std::to_string(n_features_));
  double sum = 0.0, lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < trees_.size(); ++i) {
    const double v = trees_[i].predict(x);
    sum += v;
    lo = i ? std::min(lo, v) : v;
    hi = i ? std::max(hi, v) : v;
  }
  // clamp keeps a forest of identical predictions exact
  return std::clamp(sum / static_cast<double>(trees_.size()), lo, hi);
}

std::vector<double> ForestModel::predict(const FeatureMatrix& x, std::size_t jobs) const {
  if (x.cols() != n_features_)
    throw Error(ErrorKind::kMismatch, "matrix has " + std::to_string(x.cols()) +
                                          " columns, model expects " +
                                          std::to_string(n_features_));
  std::vector<double> out(x.rows());
  parallel_for(x.rows(), jobs, [&](std::size_t i) { out[i] = predict_row(x.row(i)); });
  return out;
}

void ForestModel::save(std::ostream& out) const {
  out << kForestHeader << ' ' << kForestVersion << '\n';
  out << "n_features " << n_features_ << '\n';
  out << "n_trees " << trees_.size() << '\n';
  out << "min_samples_leaf " << params_.min_samples_leaf << '\n';
  out << "max_depth " << params_.max_depth << '\n';
  out << "max_features " << (params_.max_features == MaxFeatures::kSqrt ? "sqrt" : "all") << '\n';
  out << "bootstrap " << (params_.bootstrap ? 1 : 0) << '\n';
  out << "seed " << params_.seed << '\n';
  out << "base_value " << format_exact(base_value_) << '\n';
  for (const auto& t : trees_) {
    out << "tree " << t.nodes.size() << '\n';
    write_subtree(out, t, 0);
  }
  out << "end\n";
}

ForestModel ForestModel::load(std::istream& in) {
  Reader reader(in);
  const auto header = reader.next();
  if (header.size() != 2 || header[0] != kForestHeader) reader.fail("not a forest model file");
  const int version = reader.integer<int>(header[1]);
  if (version != kForestVersion)
    throw Error(ErrorKind::kCorrupt, "forest model version " + std::to_string(version) +
                                         " is not supported (expected " +
                                         std::to_string(kForestVersion) + ")");
  Params params;
  const auto n_features = reader.integer<std::size_t>(reader.expect("n_features", 1)[1]);
  params.n_trees = reader.integer<std::size_t>(reader.expect("n_trees", 1)[1]);
  params.min_samples_leaf = reader.integer<std::size_t>(reader.expect("min_samples_leaf", 1)[1]);
  params.max_depth = reader.integer<std::size_t>(reader.expect("max_depth", 1)[1]);
  const auto rule = reader.expect("max_features", 1)[1];
  if (rule != "sqrt" && rule != "all") reader.fail("unknown max_features '" + rule + "'");
  params.max_features = rule == "sqrt" ? MaxFeatures::kSqrt : MaxFeatures::kAll;
  params.bootstrap = reader.integer<int>(reader.expect("bootstrap", 1)[1]) != 0;
  params.seed = reader.integer<std::uint64_t>(reader.expect("seed", 1)[1]);
  const double base = reader.real(reader.expect("base_value", 1)[1]);

  std::vector<Tree> trees(params.n_trees);
  for (auto& tree : trees) {
    std::size_t remaining = reader.integer<std::size_t>(reader.expect("tree", 1)[1]);
    read_subtree(reader, tree, remaining);
    if (remaining != 0) reader.fail("tree has fewer nodes than declared");
  }
  if (reader.next() != std::vector<std::string>{"end"}) reader.fail("expected 'end'");
  try {
    return ForestModel(std::move(trees), n_features, params, base);
  } catch (const Error& e) {
    throw Error(ErrorKind::kCorrupt, std::string("forest model: ") + e.what());
  }
}

void ForestModel::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + file.string());
  save(out);
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + file.string());
}

ForestModel ForestModel::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::kLoad, "missing file: " + file.string());
  return load(in);
}

ForestModel train(const FeatureMatrix& x, std::span<const double> y, const Params& params,
                  std::size_t jobs) {
  if (x.rows() == 0 || x.cols() == 0) throw Error(ErrorKind::kArgument, "training matrix is empty");
  if (y.size() != x.rows())
    throw Error(ErrorKind::kArgument, "target length " + std::to_string(y.size()) +
                                          " does not match " + std::to_string(x.rows()) + " rows");
  for (double v : y)
    if (!std::isfinite(v)) throw Error(ErrorKind::kValidation, "non-finite training target");
  if (params.n_trees == 0) throw Error(ErrorKind::kArgument, "n_trees must be >= 1");

  std::vector<Tree> trees(params.n_trees);
  parallel_for(params.n_trees, jobs, [&](std::size_t t) {
    TreeBuilder builder(x, y, params, rng::derive_seed(params.seed, t));
    trees[t] = builder.build();
  });
  const double base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  return ForestModel(std::move(trees), x.cols(), params, base);
}

}  // namespace probeforge::forest
