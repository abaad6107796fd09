#include "feature_assembly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "agnostic_features.hpp"
#include "text_format.hpp"

namespace probeforge::features {
namespace {

constexpr const char* kSelectionHeader = "probeforge-selection";

double correlation_from_moments(double cxx, double cyy, double cxy) {
  if (!(cxx > 0.0) || !(cyy > 0.0)) return 0.0;
  return std::clamp(cxy / std::sqrt(cxx * cyy), -1.0, 1.0);
}

void check_compatible(const FeatureLayout& layout, const dataset::Bundle& bundle) {
  const auto& m = bundle.manifest;
  if (m.task_type != layout.task_type)
    throw Error(ErrorKind::kMismatch,
                "task_type mismatch: source is " + to_string(layout.task_type) + ", dataset '" +
                    m.dataset_name + "' is " + to_string(m.task_type) +
                    " (transfer pairs never mix multiple-choice and short-form)");
  if (m.hidden_dim != layout.hidden_dim)
    throw Error(ErrorKind::kMismatch, "hidden_dim mismatch: source has " +
                                          std::to_string(layout.hidden_dim) + ", dataset '" +
                                          m.dataset_name + "' has " +
                                          std::to_string(m.hidden_dim));
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kOneLayer: return "one_layer";
    case Mode::kSelected: return "selected";
    case Mode::kMultiLayer: return "multi_layer";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "one_layer") return Mode::kOneLayer;
  if (s == "selected") return Mode::kSelected;
  if (s == "multi_layer") return Mode::kMultiLayer;
  throw Error(ErrorKind::kArgument,
              "unknown mode '" + s + "' (expected one_layer, selected or multi_layer)");
}

std::string AssemblyConfig::label() const {
  switch (mode) {
    case Mode::kOneLayer: return "one_layer_L" + std::to_string(layer);
    case Mode::kSelected: return "selected_L" + std::to_string(layer) + "_k" + std::to_string(k);
    case Mode::kMultiLayer: {
      bool contiguous = layers.size() > 1;
      for (std::size_t i = 1; i < layers.size(); ++i)
        if (layers[i] != layers[i - 1] + 1) contiguous = false;
      if (contiguous)
        return "multi_layer_L" + std::to_string(layers.front()) + "-" +
               std::to_string(layers.back());
      std::string out = "multi_layer_L";
      for (std::size_t i = 0; i < layers.size(); ++i)
        out += (i ? "_" : "") + std::to_string(layers[i]);
      return out;
    }
  }
  return "?";
}

void AssemblyConfig::validate() const {
  if (mode == Mode::kSelected && k == 0) throw Error(ErrorKind::kArgument, "k must be >= 1");
  if (mode == Mode::kMultiLayer) {
    if (layers.empty()) throw Error(ErrorKind::kArgument, "multi_layer needs at least one layer");
    std::vector<int> sorted = layers;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error(ErrorKind::kArgument, "multi_layer layers contain duplicates");
  }
}

std::string SelectionMap::to_text() const {
  std::string out = std::string(kSelectionHeader) + " 1 " + std::to_string(source_columns.size()) + "\n";
  for (std::size_t i = 0; i < source_columns.size(); ++i)
    out += std::to_string(source_columns[i]) + " " + format_exact(scores[i]) + "\n";
  return out;
}

SelectionMap SelectionMap::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  int version = 0;
  std::size_t k = 0;
  if (!(in >> header >> version >> k) || header != kSelectionHeader)
    throw Error(ErrorKind::kCorrupt, "not a selection map");
  if (version != 1)
    throw Error(ErrorKind::kCorrupt, "unsupported selection map version " + std::to_string(version));
  SelectionMap map;
  for (std::size_t i = 0; i < k; ++i) {
    std::string idx, score;
    if (!(in >> idx >> score)) throw Error(ErrorKind::kCorrupt, "truncated selection map");
    map.source_columns.push_back(parse_int<std::size_t>(idx));
    map.scores.push_back(parse_double(score));
  }
  return map;
}

std::size_t FeatureLayout::hidden_width() const {
  switch (config.mode) {
    case Mode::kOneLayer: return hidden_dim;
    case Mode::kSelected: return config.k;
    case Mode::kMultiLayer: return config.layers.size() * hidden_dim;
  }
  return 0;
}

std::size_t FeatureLayout::width() const {
  return hidden_width() + (config.include_agnostic ? agnostic_arity(task_type) : 0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorKind::kArgument, "pearson: length mismatch (" + std::to_string(x.size()) +
                                          " vs " + std::to_string(y.size()) + ")");
  if (x.size() < 2) throw Error(ErrorKind::kArgument, "pearson needs at least 2 points");
  // Welford co-moment update.
  double mx = 0, my = 0, cxx = 0, cyy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    mx += dx / n;
    my += dy / n;
    cxx += dx * (x[i] - mx);
    cyy += dy * (y[i] - my);
    cxy += dx * (y[i] - my);
  }
  return correlation_from_moments(cxx, cyy, cxy);
}

std::vector<double> column_correlations(const Matrix<float>& x, std::span<const double> y) {
  if (x.rows() != y.size())
    throw Error(ErrorKind::kArgument, "column_correlations: row/label count mismatch");
  if (x.rows() < 2) throw Error(ErrorKind::kArgument, "correlation needs at least 2 rows");
  const std::size_t p = x.cols();
  std::vector<double> mx(p, 0.0), cxx(p, 0.0), cxy(p, 0.0);
  double my = 0, cyy = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dy = y[i] - my;
    my += dy / n;
    const double dy_post = y[i] - my;
    cyy += dy * dy_post;
    const auto row = x.row(i);
    for (std::size_t j = 0; j < p; ++j) {
      const double xv = row[j];
      const double dx = xv - mx[j];
      mx[j] += dx / n;
      cxx[j] += dx * (xv - mx[j]);
      cxy[j] += dx * dy_post;
    }
  }
  std::vector<double> r(p);
  for (std::size_t j = 0; j < p; ++j) r[j] = correlation_from_moments(cxx[j], cyy, cxy[j]);
  return r;
}

SelectionMap fit_selection(const Matrix<float>& hidden_train, std::span<const double> labels,
                           std::size_t k) {
  if (k == 0) throw Error(ErrorKind::kArgument, "k must be >= 1");
  if (k > hidden_train.cols())
    throw Error(ErrorKind::kArgument, "k = " + std::to_string(k) + " exceeds the " +
                                          std::to_string(hidden_train.cols()) +
                                          " available columns");
  const std::vector<double> r = column_correlations(hidden_train, labels);
  std::vector<double> score(r.size());
  for (std::size_t j = 0; j < r.size(); ++j) score[j] = std::abs(r[j]);
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  SelectionMap map;
  map.source_columns.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t c : map.source_columns) map.scores.push_back(score[c]);
  return map;
}

FeatureLayout fit_layout(std::span<const TrainingSource> sources, const AssemblyConfig& config) {
  config.validate();
  if (sources.empty()) throw Error(ErrorKind::kArgument, "fit_layout needs at least one source");
  FeatureLayout layout;
  layout.config = config;
  layout.task_type = sources.front().bundle->manifest.task_type;
  layout.hidden_dim = sources.front().bundle->manifest.hidden_dim;

  for (const auto& src : sources) {
    check_compatible(layout, *src.bundle);
    const auto& m = src.bundle->manifest;
    if (config.mode == Mode::kMultiLayer) {
      for (int l : config.layers) (void)m.layer_offset(l);
    } else {
      (void)m.layer_offset(config.layer);
    }
  }

  if (config.mode == Mode::kSelected) {
    if (config.k > layout.hidden_dim)
      throw Error(ErrorKind::kArgument, "k = " + std::to_string(config.k) +
                                            " exceeds hidden_dim " +
                                            std::to_string(layout.hidden_dim));
    std::size_t total = 0;
    for (const auto& src : sources) total += src.rows.size();
    Matrix<float> hidden(total, layout.hidden_dim);
    std::vector<double> y;
    y.reserve(total);
    std::size_t r = 0;
    for (const auto& src : sources) {
      if (src.labels.size() != src.bundle->manifest.n_samples)
        throw Error(ErrorKind::kArgument, "labels length does not match dataset size");
      const Matrix<float> block = dataset::slice_layer(*src.bundle, config.layer, src.rows);
      for (std::size_t i = 0; i < block.rows(); ++i, ++r) {
        std::copy(block.row(i).begin(), block.row(i).end(), hidden.row(r).begin());
        y.push_back(src.labels[src.rows[i]]);
      }
    }
    layout.selection = fit_selection(hidden, y, config.k);
  }
  return layout;
}

FeatureView project(const FeatureLayout& layout, const dataset::Bundle& bundle,
                    std::span<const std::size_t> rows, std::span<const double> labels) {
  check_compatible(layout, bundle);
  const auto& cfg = layout.config;
  const auto& m = bundle.manifest;
  if (!labels.empty() && labels.size() != m.n_samples)
    throw Error(ErrorKind::kArgument, "labels length does not match dataset size");

  // Absolute source column for every hidden feature.
  std::vector<std::size_t> columns;
  columns.reserve(layout.hidden_width());
  switch (cfg.mode) {
    case Mode::kOneLayer: {
      const std::size_t off = m.layer_offset(cfg.layer);
      for (std::size_t j = 0; j < m.hidden_dim; ++j) columns.push_back(off + j);
      break;
    }
    case Mode::kSelected: {
      if (!layout.selection)
        throw Error(ErrorKind::kArgument, "selected layout has no fitted selection map");
      const std::size_t off = m.layer_offset(cfg.layer);
      for (std::size_t c : layout.selection->source_columns) {
        if (c >= m.hidden_dim) throw Error(ErrorKind::kCorrupt, "selection column out of range");
        columns.push_back(off + c);
      }
      break;
    }
    case Mode::kMultiLayer:
      for (int l : cfg.layers) {
        const std::size_t off = m.layer_offset(l);
        for (std::size_t j = 0; j < m.hidden_dim; ++j) columns.push_back(off + j);
      }
      break;
  }

  FeatureView view;
  view.agnostic_start = columns.size();
  view.x = FeatureMatrix(rows.size(), layout.width());
  view.rows.assign(rows.begin(), rows.end());
  if (!labels.empty()) view.targets.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t src = rows[r];
    if (src >= m.n_samples) throw Error(ErrorKind::kArgument, "row index out of range");
    const auto in = bundle.hidden.row(src);
    auto out = view.x.row(r);
    for (std::size_t j = 0; j < columns.size(); ++j) out[j] = in[columns[j]];
    if (cfg.include_agnostic) {
      const auto feats = agnostic::sample_features(m.task_type, bundle.signals[src]);
      for (std::size_t j = 0; j < feats.size(); ++j)
        out[columns.size() + j] = static_cast<float>(feats[j]);
    }
    if (!labels.empty()) view.targets.push_back(labels[src]);
  }
  return view;
}

FeatureView concat(std::span<const FeatureView> views) {
  if (views.empty()) return {};
  if (views.size() == 1) return views.front();
  const std::size_t width = views.front().x.cols();
  std::size_t total = 0;
  for (const auto& v : views) {
    if (v.x.cols() != width) throw Error(ErrorKind::kMismatch, "cannot concat views of different width");
    total += v.x.rows();
  }
  FeatureView out;
  out.agnostic_start = views.front().agnostic_start;
  out.x = FeatureMatrix(total, width);
  std::size_t r = 0;
  for (const auto& v : views) {
    std::copy(v.x.data().begin(), v.x.data().end(),
              out.x.data().begin() + static_cast<std::ptrdiff_t>(r * width));
    r += v.x.rows();
    out.targets.insert(out.targets.end(), v.targets.begin(), v.targets.end());
    out.rows.insert(out.rows.end(), v.rows.begin(), v.rows.end());
  }
  return out;
}

Assembled assemble(const dataset::Bundle& bundle, std::span<const double> labels,
                   const dataset::Split& split, const AssemblyConfig& config) {
  const TrainingSource src{&bundle, labels, split.train_ids};
  Assembled out;
  out.layout = fit_layout(std::span<const TrainingSource>(&src, 1), config);
  out.train = project(out.layout, bundle, split.train_ids, labels);
  out.test = project(out.layout, bundle, split.test_ids, labels);
  return out;
}

}  // namespace probeforge::features
