#include "probeforge/probeforge.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <sstream>
#include <string>

#include "common.hpp"
#include "dataset_store.hpp"
#include "feature_assembly.hpp"
#include "harness.hpp"
#include "labeling.hpp"
#include "metrics.hpp"
#include "probe.hpp"
#include "text_format.hpp"
#include "tree_shap.hpp"

struct pf_bundle {
  probeforge::dataset::Bundle bundle;
};

struct pf_probe {
  probeforge::Probe probe;
};

namespace {

using namespace probeforge;

thread_local std::string g_last_error;

struct ArgumentError {
  std::string message;
};

pf_status fail(pf_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

template <typename Fn>
pf_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PF_OK;
  } catch (const ArgumentError& e) {
    return fail(PF_ERR_ARGUMENT, e.message);
  } catch (const Error& e) {
    return fail(e.kind() == ErrorKind::kArgument ? PF_ERR_ARGUMENT : PF_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(PF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PF_ERR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw ArgumentError{what};
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void ensure_labels(dataset::Bundle& b) {
  if (!b.labels) b.labels = labeling::label_bundle(b).values;
}

features::AssemblyConfig to_config(const pf_assembly* a) {
  require(a && a->mode, "assembly config is null");
  features::AssemblyConfig c;
  c.mode = features::parse_mode(a->mode);
  c.layer = a->layer;
  if (c.mode == features::Mode::kMultiLayer) {
    require(a->layers || a->n_layers == 0, "layers pointer is null");
    c.layers.assign(a->layers, a->layers + a->n_layers);
  }
  c.k = a->k;
  c.include_agnostic = a->include_agnostic != 0;
  c.validate();
  return c;
}

dataset::Split to_split(const dataset::Bundle& b, const pf_split_spec* s) {
  require(s, "split spec is null");
  return dataset::make_split(b.manifest.n_samples, s->seed, s->train_fraction);
}

std::vector<std::size_t> pick_rows(const dataset::Bundle& b, const pf_split_spec* s, int rows) {
  if (rows == PF_ROWS_ALL) {
    std::vector<std::size_t> all(b.manifest.n_samples);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  require(rows == PF_ROWS_TRAIN || rows == PF_ROWS_TEST, "rows must be train, test or all");
  auto split = to_split(b, s);
  return rows == PF_ROWS_TRAIN ? split.train_ids : split.test_ids;
}

forest::Params to_params(const pf_forest_params* p) {
  require(p, "forest params are null");
  forest::Params out;
  out.n_trees = p->n_trees;
  out.min_samples_leaf = p->min_samples_leaf;
  out.max_depth = p->max_depth;
  out.max_features = p->max_features_all ? forest::MaxFeatures::kAll : forest::MaxFeatures::kSqrt;
  out.seed = p->seed;
  if (out.n_trees == 0) throw ArgumentError{"n_trees must be >= 1"};
  if (out.min_samples_leaf == 0) throw ArgumentError{"min_samples_leaf must be >= 1"};
  return out;
}

}  // namespace

extern "C" {

const char* pf_last_error(void) { return g_last_error.c_str(); }

void pf_string_free(char* s) { std::free(s); }

const char* pf_version(void) { return "1.0.0"; }

pf_status pf_bundle_load(const char* dir, pf_bundle** out) {
  return guarded([&] {
    require(dir && out, "null argument");
    *out = nullptr;
    auto* b = new pf_bundle{dataset::load_bundle(dir)};
    *out = b;
  });
}

void pf_bundle_free(pf_bundle* b) { delete b; }

pf_status pf_bundle_get_info(const pf_bundle* b, pf_bundle_info* out) {
  return guarded([&] {
    require(b && out, "null argument");
    const auto& m = b->bundle.manifest;
    out->n_samples = m.n_samples;
    out->hidden_dim = m.hidden_dim;
    out->n_layers = m.layers.size();
    out->task_type = m.task_type == TaskType::kMultipleChoice ? 0 : 1;
    out->label_kind = m.label_kind == LabelKind::kExactMatch ? 0 : 1;
    out->has_labels = b->bundle.labels ? 1 : 0;
  });
}

pf_status pf_bundle_layers(const pf_bundle* b, int* out, size_t n) {
  return guarded([&] {
    require(b && out, "null argument");
    const auto& layers = b->bundle.manifest.layers;
    require(n >= layers.size(), "output buffer too small");
    std::copy(layers.begin(), layers.end(), out);
  });
}

pf_status pf_bundle_summary(const pf_bundle* b, char** out) {
  return guarded([&] {
    require(b && out, "null argument");
    const auto& m = b->bundle.manifest;
    std::ostringstream s;
    s << m.dataset_name << ": task_type=" << to_string(m.task_type) << " n=" << m.n_samples
      << " hidden_dim=" << m.hidden_dim << " layers=";
    for (std::size_t i = 0; i < m.layers.size(); ++i) s << (i ? "," : "") << m.layers[i];
    s << " row_width=" << m.row_width() << " agnostic=" << m.agnostic_arity()
      << " labels=" << (b->bundle.labels ? "stored" : "none");
    *out = dup_string(s.str());
  });
}

pf_status pf_bundle_compute_labels(pf_bundle* b) {
  return guarded([&] {
    require(b, "null argument");
    b->bundle.labels = labeling::label_bundle(b->bundle).values;
  });
}

pf_status pf_bundle_labels(pf_bundle* b, double* out, size_t n) {
  return guarded([&] {
    require(b && out, "null argument");
    require(n == b->bundle.manifest.n_samples, "label buffer length must equal n_samples");
    ensure_labels(b->bundle);
    std::copy(b->bundle.labels->begin(), b->bundle.labels->end(), out);
  });
}

pf_status pf_bundle_write_labels(const pf_bundle* b, const char* file) {
  return guarded([&] {
    require(b && file, "null argument");
    require(b->bundle.labels.has_value(), "bundle has no labels; compute them first");
    dataset::write_labels(file, *b->bundle.labels);
  });
}

void pf_assembly_default(pf_assembly* a) {
  if (!a) return;
  a->mode = "one_layer";
  a->layer = 15;
  a->layers = nullptr;
  a->n_layers = 0;
  a->k = 300;
  a->include_agnostic = 0;
}

void pf_split_default(pf_split_spec* s) {
  if (!s) return;
  s->seed = 42;
  s->train_fraction = 0.8;
}

pf_status pf_features_csv(pf_bundle* b, const pf_assembly* a, const pf_split_spec* s, int rows,
                          char** out) {
  return guarded([&] {
    require(b && out, "null argument");
    const auto config = to_config(a);
    auto& bundle = b->bundle;
    ensure_labels(bundle);
    const auto split = to_split(bundle, s);
    const features::TrainingSource src{&bundle, *bundle.labels, split.train_ids};
    const auto layout = features::fit_layout(std::span<const features::TrainingSource>(&src, 1), config);
    const auto ids = pick_rows(bundle, s, rows);
    const auto view = features::project(layout, bundle, ids, *bundle.labels);

    std::string text = "sample_id";
    for (std::size_t c = 0; c < view.x.cols(); ++c) text += ",feature_" + std::to_string(c);
    text += ",label\n";
    for (std::size_t r = 0; r < view.x.rows(); ++r) {
      text += csv_field(bundle.signals[view.rows[r]].id);
      for (float v : view.x.row(r)) text += "," + format_exact(v);
      text += "," + format_exact(view.targets[r]) + "\n";
    }
    *out = dup_string(text);
  });
}

pf_status pf_selection_text(pf_bundle* b, int layer, size_t k, const pf_split_spec* s, char** out) {
  return guarded([&] {
    require(b && out, "null argument");
    auto& bundle = b->bundle;
    ensure_labels(bundle);
    const auto split = to_split(bundle, s);
    const auto hidden = dataset::slice_layer(bundle, layer, split.train_ids);
    std::vector<double> y;
    for (std::size_t r : split.train_ids) y.push_back((*bundle.labels)[r]);
    *out = dup_string(features::fit_selection(hidden, y, k).to_text());
  });
}

void pf_forest_params_default(pf_forest_params* p) {
  if (!p) return;
  const forest::Params d;
  p->n_trees = d.n_trees;
  p->min_samples_leaf = d.min_samples_leaf;
  p->max_depth = d.max_depth;
  p->max_features_all = 0;
  p->seed = d.seed;
}

pf_status pf_probe_train(pf_bundle* const* bundles, size_t n_bundles, const pf_assembly* a,
                         const pf_forest_params* p, const pf_split_spec* s, size_t jobs,
                         pf_probe** out) {
  return guarded([&] {
    require(bundles && out && n_bundles > 0, "null argument");
    *out = nullptr;
    const auto config = to_config(a);
    const auto params = to_params(p);
    std::vector<dataset::Split> splits;
    for (std::size_t i = 0; i < n_bundles; ++i) {
      require(bundles[i], "null bundle");
      ensure_labels(bundles[i]->bundle);
      splits.push_back(to_split(bundles[i]->bundle, s));
    }
    std::vector<ProbeSource> sources;
    for (std::size_t i = 0; i < n_bundles; ++i)
      sources.push_back({&bundles[i]->bundle, *bundles[i]->bundle.labels, &splits[i]});
    *out = new pf_probe{train_probe(sources, config, params, jobs)};
  });
}

pf_status pf_probe_save(const pf_probe* p, const char* file) {
  return guarded([&] {
    require(p && file, "null argument");
    p->probe.save(std::filesystem::path(file));
  });
}

pf_status pf_probe_load(const char* file, pf_probe** out) {
  return guarded([&] {
    require(file && out, "null argument");
    *out = nullptr;
    *out = new pf_probe{Probe::load(std::filesystem::path(file))};
  });
}

void pf_probe_free(pf_probe* p) { delete p; }

pf_status pf_probe_summary(const pf_probe* p, char** out) {
  return guarded([&] {
    require(p && out, "null argument");
    const auto& pr = p->probe;
    std::ostringstream s;
    s << "probe trained on";
    for (const auto& src : pr.sources) s << ' ' << src;
    s << ": " << to_string(pr.layout.task_type) << ' ' << pr.layout.config.label()
      << (pr.layout.config.include_agnostic ? "+agnostic" : "") << " width=" << pr.layout.width()
      << " trees=" << pr.model.trees().size();
    *out = dup_string(s.str());
  });
}

pf_status pf_probe_evaluate(const pf_probe* p, pf_bundle* b, const pf_split_spec* s, int rows,
                            double threshold, size_t bins, size_t jobs, pf_eval* out) {
  return guarded([&] {
    require(p && b && out, "null argument");
    require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0,1)");
    require(bins >= 1, "bins must be >= 1");
    auto& bundle = b->bundle;
    ensure_labels(bundle);
    const auto ids = pick_rows(bundle, s, rows);
    const auto view = p->probe.view(bundle, ids, {});
    const auto scores = p->probe.score(view, jobs);
    std::vector<double> y;
    for (std::size_t r : ids) y.push_back((*bundle.labels)[r]);
    const auto truth = labeling::binarize(y, threshold);
    const auto r = metrics::evaluate(scores, truth, threshold, bins);
    *out = {r.acc, r.auroc, r.ece, r.n};
  });
}

pf_status pf_probe_scores_csv(const pf_probe* p, pf_bundle* b, const pf_split_spec* s, int rows,
                              size_t jobs, char** out) {
  return guarded([&] {
    require(p && b && out, "null argument");
    auto& bundle = b->bundle;
    ensure_labels(bundle);
    const auto ids = pick_rows(bundle, s, rows);
    const auto view = p->probe.view(bundle, ids, {});
    const auto scores = p->probe.score(view, jobs);
    std::string text = "sample_id,score,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
      text += csv_field(bundle.signals[ids[i]].id) + "," + format_report(scores[i]) + "," +
              format_report((*bundle.labels)[ids[i]]) + "\n";
    *out = dup_string(text);
  });
}

pf_status pf_probe_shap_csv(const pf_probe* p, pf_bundle* b, const pf_split_spec* s, int rows,
                            size_t max_rows, size_t jobs, char** out) {
  return guarded([&] {
    require(p && b && out, "null argument");
    auto ids = pick_rows(b->bundle, s, rows);
    if (max_rows > 0 && ids.size() > max_rows) ids.resize(max_rows);
    const auto view = p->probe.view(b->bundle, ids, {});
    const auto attributions = shap::shap_forest(p->probe.model, view.x, jobs);
    *out = dup_string(shap::mean_abs_table(attributions, view.agnostic_start).to_csv());
  });
}

pf_status pf_pca_csv(pf_bundle* const* bundles, size_t n_bundles, int layer, char** out,
                     double explained[2]) {
  return guarded([&] {
    require(bundles && out && n_bundles > 0, "null argument");
    std::vector<const dataset::Bundle*> list;
    for (std::size_t i = 0; i < n_bundles; ++i) {
      require(bundles[i], "null bundle");
      list.push_back(&bundles[i]->bundle);
    }
    const auto projection = pca::project_layer(list, layer);
    if (explained) {
      explained[0] = projection.explained_variance.at(0);
      explained[1] = projection.explained_variance.at(1);
    }
    *out = dup_string(pca::to_csv(projection.samples));
  });
}

void pf_synth_default(pf_synth_params* p) {
  if (!p) return;
  static const int kLayer = 15;
  const harness::SynthParams d;
  p->n_tasks = d.n_tasks;
  p->n_per_task = d.n_per_task;
  p->hidden_dim = d.hidden_dim;
  p->layers = &kLayer;
  p->n_layers = 1;
  p->task_type = 0;
  p->beta = d.beta;
  p->gamma = d.gamma;
  p->noise = d.noise;
  p->seed = d.seed;
  p->prefix = "task";
}

pf_status pf_synth_generate(const pf_synth_params* p, const char* out_dir) {
  return guarded([&] {
    require(p && out_dir && p->prefix, "null argument");
    require(p->layers || p->n_layers == 0, "layers pointer is null");
    harness::SynthParams sp;
    sp.n_tasks = p->n_tasks;
    sp.n_per_task = p->n_per_task;
    sp.hidden_dim = p->hidden_dim;
    sp.layers.assign(p->layers, p->layers + p->n_layers);
    sp.task_type = p->task_type == 0 ? TaskType::kMultipleChoice : TaskType::kShortForm;
    sp.beta = p->beta;
    sp.gamma = p->gamma;
    sp.noise = p->noise;
    sp.seed = p->seed;
    sp.prefix = p->prefix;
    for (const auto& b : harness::synth_generate(sp))
      dataset::write_bundle(b, std::filesystem::path(out_dir) / b.manifest.dataset_name);
  });
}

pf_status pf_run_plan_file(const char* plan_file, const char* out_dir,
                           const pf_plan_overrides* overrides, size_t jobs, char** summary) {
  return guarded([&] {
    require(plan_file, "null argument");
    auto plan = harness::Plan::load(plan_file);
    if (overrides) {
      if (overrides->has_seed) plan.seed = plan.forest.seed = overrides->seed;
      if (overrides->has_threshold) plan.threshold = overrides->threshold;
      if (overrides->has_bins) plan.bins = overrides->bins;
      if (overrides->has_trees) plan.forest.n_trees = overrides->trees;
      if (overrides->has_k)
        for (auto& c : plan.configs) c.k = overrides->k;
      try {
        plan.validate();
      } catch (const Error& e) {
        throw ArgumentError{e.what()};
      }
    }
    std::filesystem::path dir;
    if (out_dir) {
      dir = out_dir;
    } else {
      if (plan.output_dir.empty()) throw ArgumentError{"no output directory: pass one or set output_dir"};
      dir = std::filesystem::path(plan.output_dir).is_absolute() ? std::filesystem::path(plan.output_dir)
                                                                 : plan.base_dir / plan.output_dir;
    }
    const auto report = harness::run_plan(plan, jobs);
    harness::emit_report(report, dir);
    if (summary) {
      std::ostringstream s;
      s << report.results.size() << " results, " << report.deltas.size() << " deltas, "
        << report.errors.size() << " errors -> " << dir.string();
      *summary = dup_string(s.str());
    }
  });
}

pf_status pf_report_check(const char* out_dir, char** out) {
  return guarded([&] {
    require(out_dir && out, "null argument");
    *out = dup_string(harness::check_report(out_dir));
  });
}

}  // extern "C"
