// probeforge command-line front end. Talks to the library only through the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "probeforge/probeforge.h"

namespace {

// Raised to leave main with a given exit code after printing the message.
struct Exit {
  int code;
  std::string message;
};

int exit_code(pf_status s) {
  switch (s) {
    case PF_OK: return 0;
    case PF_ERR_ARGUMENT: return 1;
    case PF_ERR_DATA: return 2;
    default: return 3;
  }
}

void check(pf_status s) {
  if (s != PF_OK) throw Exit{exit_code(s), pf_last_error()};
}

struct BundleDeleter {
  void operator()(pf_bundle* b) const { pf_bundle_free(b); }
};
struct ProbeDeleter {
  void operator()(pf_probe* p) const { pf_probe_free(p); }
};
struct StringDeleter {
  void operator()(char* s) const { pf_string_free(s); }
};
using BundlePtr = std::unique_ptr<pf_bundle, BundleDeleter>;
using ProbePtr = std::unique_ptr<pf_probe, ProbeDeleter>;
using OwnedString = std::unique_ptr<char, StringDeleter>;

BundlePtr load_bundle(const std::string& dir) {
  pf_bundle* b = nullptr;
  check(pf_bundle_load(dir.c_str(), &b));
  return BundlePtr(b);
}

ProbePtr load_probe(const std::string& file) {
  pf_probe* p = nullptr;
  check(pf_probe_load(file.c_str(), &p));
  return ProbePtr(p);
}

// Writes to the file, or stdout when the path is empty or "-".
void emit(const std::string& path, const char* text) {
  if (path.empty() || path == "-") {
    std::fputs(text, stdout);
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Exit{2, "cannot write " + path};
  out << text;
  if (!out) throw Exit{2, "write failed: " + path};
}

int rows_code(const std::string& rows) {
  if (rows == "train") return PF_ROWS_TRAIN;
  if (rows == "test") return PF_ROWS_TEST;
  return PF_ROWS_ALL;
}

struct Globals {
  std::uint64_t seed = 42;
  double threshold = 0.5;
  std::size_t bins = 10;
  std::size_t trees = 200;
  std::size_t k = 300;
  std::size_t jobs = 0;
  double train_fraction = 0.8;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threshold_opt = nullptr;
  CLI::Option* bins_opt = nullptr;
  CLI::Option* trees_opt = nullptr;
  CLI::Option* k_opt = nullptr;

  pf_split_spec split() const { return {seed, train_fraction}; }
  std::size_t job_count() const {
    if (jobs > 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
  }
};

struct Assembly {
  std::string mode = "one_layer";
  int layer = 15;
  std::vector<int> layers{13, 14, 15, 16, 17};
  bool agnostic = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "Feature set")
        ->check(CLI::IsMember({"one_layer", "selected", "multi_layer"}))
        ->capture_default_str();
    cmd->add_option("--layer", layer, "Source layer for one_layer/selected")->capture_default_str();
    cmd->add_option("--layers", layers, "Layers for multi_layer")->delimiter(',')->capture_default_str();
    cmd->add_flag("--agnostic", agnostic, "Append the data-agnostic features");
  }

  pf_assembly get(const Globals& g) const {
    pf_assembly a;
    pf_assembly_default(&a);
    a.mode = mode.c_str();
    a.layer = layer;
    a.layers = layers.data();
    a.n_layers = layers.size();
    a.k = g.k;
    a.include_agnostic = agnostic ? 1 : 0;
    return a;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probeforge: probes for LLM answer correctness from hidden states and output signals"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", pf_version());

  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "Seed for splits and forests")
                   ->envname("PROBEFORGE_SEED")
                   ->capture_default_str();
  g.threshold_opt = app.add_option("--threshold", g.threshold, "Decision threshold on scores and labels")
                        ->check(CLI::Range(0.0, 1.0))
                        ->capture_default_str();
  g.bins_opt = app.add_option("--bins", g.bins, "ECE bins")->check(CLI::PositiveNumber)->capture_default_str();
  g.trees_opt = app.add_option("--trees", g.trees, "Trees per forest")->check(CLI::PositiveNumber)->capture_default_str();
  g.k_opt = app.add_option("--k", g.k, "Columns kept by the selected mode")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--train-fraction", g.train_fraction, "Train share of each dataset split")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  // validate
  std::string dataset;
  auto* validate = app.add_subcommand("validate", "Load a dataset directory and check every invariant");
  validate->add_option("--dataset", dataset, "Dataset directory")->required();

  // label
  std::string out_path;
  auto* label = app.add_subcommand("label", "Compute correctness labels from the stored answers");
  label->add_option("--dataset", dataset, "Dataset directory")->required();
  label->add_option("--out", out_path, "Label file (default <dataset>/labels.f32)");

  // features
  Assembly assembly;
  std::string rows = "all";
  auto* feats = app.add_subcommand("features", "Write the assembled probe inputs as CSV");
  feats->add_option("--dataset", dataset, "Dataset directory")->required();
  assembly.add_to(feats);
  feats->add_option("--rows", rows, "Rows to emit")->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();
  feats->add_option("--out", out_path, "Output CSV (default stdout)");

  // select
  auto* select = app.add_subcommand("select", "Rank one layer's columns by |Pearson r| on the train split");
  select->add_option("--dataset", dataset, "Dataset directory")->required();
  select->add_option("--layer", assembly.layer, "Layer")->capture_default_str();
  select->add_option("--out", out_path, "Selection file (default stdout)");

  // train
  std::vector<std::string> datasets;
  std::size_t min_leaf = 5, max_depth = 0;
  std::string max_features = "sqrt";
  auto* train = app.add_subcommand("train", "Train a probe on the train splits of one or more datasets");
  train->add_option("--dataset", datasets, "Training dataset directory (repeatable)")->required();
  assembly.add_to(train);
  train->add_option("--min-leaf", min_leaf, "Minimum rows per leaf")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--max-depth", max_depth, "Depth cap (0 = none)")->capture_default_str();
  train->add_option("--max-features", max_features, "Features tried per split")
      ->check(CLI::IsMember({"sqrt", "all"}))
      ->capture_default_str();
  train->add_option("--out", out_path, "Probe file")->required();

  // eval
  std::string probe_path, scores_path;
  auto* eval = app.add_subcommand("eval", "Score a dataset with a trained probe");
  eval->add_option("--probe", probe_path, "Probe file")->required();
  eval->add_option("--dataset", dataset, "Dataset directory")->required();
  eval->add_option("--rows", rows, "Rows to score")->check(CLI::IsMember({"train", "test", "all"}));
  eval->add_option("--scores", scores_path, "Also write per-sample scores to this CSV");

  // transfer
  std::string plan_path, out_dir;
  auto* transfer = app.add_subcommand("transfer", "Run an experiment plan and write the report");
  transfer->add_option("--plan", plan_path, "Plan JSON file")->required();
  transfer->add_option("--out", out_dir, "Report directory (default: the plan's output_dir)");

  // shap
  std::size_t max_rows = 0;
  auto* shap = app.add_subcommand("shap", "Mean |SHAP| per probe input feature");
  shap->add_option("--probe", probe_path, "Probe file")->required();
  shap->add_option("--dataset", dataset, "Dataset directory")->required();
  shap->add_option("--rows", rows, "Rows to explain")->check(CLI::IsMember({"train", "test", "all"}));
  shap->add_option("--max-rows", max_rows, "Explain at most this many rows (0 = all)")->capture_default_str();
  shap->add_option("--out", out_path, "Output CSV (default stdout)");

  // pca
  auto* pca = app.add_subcommand("pca", "Two-component PCA of one layer across datasets");
  pca->add_option("--dataset", datasets, "Dataset directory (repeatable)")->required();
  pca->add_option("--layer", assembly.layer, "Layer")->capture_default_str();
  pca->add_option("--out", out_path, "Output CSV (default stdout)");

  // synth
  pf_synth_params sp;
  pf_synth_default(&sp);
  std::vector<int> synth_layers{15};
  std::string synth_task = "multiple_choice", prefix = "task";
  auto* synth = app.add_subcommand("synth", "Write synthetic datasets with known transfer behaviour");
  synth->add_option("--out", out_dir, "Directory receiving one dataset per task")->required();
  synth->add_option("--tasks", sp.n_tasks, "Number of tasks")->capture_default_str();
  synth->add_option("--n", sp.n_per_task, "Samples per task")->capture_default_str();
  synth->add_option("--hidden-dim", sp.hidden_dim, "Hidden width")->capture_default_str();
  synth->add_option("--layers", synth_layers, "Stored layers")->delimiter(',')->capture_default_str();
  synth->add_option("--task-type", synth_task, "Task type")
      ->check(CLI::IsMember({"multiple_choice", "short_form"}))
      ->capture_default_str();
  synth->add_option("--beta", sp.beta, "Hidden-state signal strength")->capture_default_str();
  synth->add_option("--gamma", sp.gamma, "Output-confidence signal strength")->capture_default_str();
  synth->add_option("--noise", sp.noise, "Noise standard deviation")->capture_default_str();
  synth->add_option("--prefix", prefix, "Dataset name prefix")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Check a written report and print its summary");
  report->add_option("--dir", out_dir, "Report directory")->required();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const pf_split_spec split = g.split();
    if (*validate) {
      auto b = load_bundle(dataset);
      char* s = nullptr;
      check(pf_bundle_summary(b.get(), &s));
      OwnedString text(s);
      std::printf("ok %s\n", text.get());
    } else if (*label) {
      auto b = load_bundle(dataset);
      check(pf_bundle_compute_labels(b.get()));
      pf_bundle_info info;
      check(pf_bundle_get_info(b.get(), &info));
      std::vector<double> values(info.n_samples);
      check(pf_bundle_labels(b.get(), values.data(), values.size()));
      const std::string file = out_path.empty() ? dataset + "/labels.f32" : out_path;
      check(pf_bundle_write_labels(b.get(), file.c_str()));
      std::size_t positive = 0;
      double sum = 0.0;
      for (double v : values) {
        sum += v;
        if (v >= g.threshold) ++positive;
      }
      std::printf("wrote %zu labels to %s: mean %.6g, %zu >= %.6g\n", values.size(), file.c_str(),
                  values.empty() ? 0.0 : sum / static_cast<double>(values.size()), positive, g.threshold);
    } else if (*feats) {
      auto b = load_bundle(dataset);
      const pf_assembly a = assembly.get(g);
      char* s = nullptr;
      check(pf_features_csv(b.get(), &a, &split, rows_code(rows), &s));
      OwnedString text(s);
      emit(out_path, text.get());
    } else if (*select) {
      auto b = load_bundle(dataset);
      char* s = nullptr;
      check(pf_selection_text(b.get(), assembly.layer, g.k, &split, &s));
      OwnedString text(s);
      emit(out_path, text.get());
    } else if (*train) {
      std::vector<BundlePtr> owned;
      std::vector<pf_bundle*> handles;
      for (const auto& d : datasets) {
        owned.push_back(load_bundle(d));
        handles.push_back(owned.back().get());
      }
      const pf_assembly a = assembly.get(g);
      pf_forest_params fp;
      pf_forest_params_default(&fp);
      fp.n_trees = g.trees;
      fp.min_samples_leaf = min_leaf;
      fp.max_depth = max_depth;
      fp.max_features_all = max_features == "all" ? 1 : 0;
      fp.seed = g.seed;
      pf_probe* raw = nullptr;
      check(pf_probe_train(handles.data(), handles.size(), &a, &fp, &split, g.job_count(), &raw));
      ProbePtr probe(raw);
      check(pf_probe_save(probe.get(), out_path.c_str()));
      char* s = nullptr;
      check(pf_probe_summary(probe.get(), &s));
      OwnedString text(s);
      std::printf("%s -> %s\n", text.get(), out_path.c_str());
    } else if (*eval) {
      auto probe = load_probe(probe_path);
      auto b = load_bundle(dataset);
      const int which = rows_code(eval->count("--rows") ? rows : "test");
      pf_eval r;
      check(pf_probe_evaluate(probe.get(), b.get(), &split, which, g.threshold, g.bins, g.job_count(), &r));
      std::printf("n,acc,auroc,ece\n%zu,%.6g,%.6g,%.6g\n", r.n, r.acc, r.auroc, r.ece);
      if (!scores_path.empty()) {
        char* s = nullptr;
        check(pf_probe_scores_csv(probe.get(), b.get(), &split, which, g.job_count(), &s));
        OwnedString text(s);
        emit(scores_path, text.get());
      }
    } else if (*transfer) {
      pf_plan_overrides o{};
      if (*g.seed_opt) o.has_seed = 1, o.seed = g.seed;
      if (*g.threshold_opt) o.has_threshold = 1, o.threshold = g.threshold;
      if (*g.bins_opt) o.has_bins = 1, o.bins = g.bins;
      if (*g.trees_opt) o.has_trees = 1, o.trees = g.trees;
      if (*g.k_opt) o.has_k = 1, o.k = g.k;
      char* s = nullptr;
      check(pf_run_plan_file(plan_path.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(), &o,
                             g.job_count(), &s));
      OwnedString text(s);
      std::printf("%s\n", text.get());
    } else if (*shap) {
      auto probe = load_probe(probe_path);
      auto b = load_bundle(dataset);
      const int which = rows_code(shap->count("--rows") ? rows : "test");
      char* s = nullptr;
      check(pf_probe_shap_csv(probe.get(), b.get(), &split, which, max_rows, g.job_count(), &s));
      OwnedString text(s);
      emit(out_path, text.get());
    } else if (*pca) {
      std::vector<BundlePtr> owned;
      std::vector<pf_bundle*> handles;
      for (const auto& d : datasets) {
        owned.push_back(load_bundle(d));
        handles.push_back(owned.back().get());
      }
      double explained[2] = {0.0, 0.0};
      char* s = nullptr;
      check(pf_pca_csv(handles.data(), handles.size(), assembly.layer, &s, explained));
      OwnedString text(s);
      emit(out_path, text.get());
      std::fprintf(stderr, "explained variance: %.6g %.6g\n", explained[0], explained[1]);
    } else if (*synth) {
      sp.layers = synth_layers.data();
      sp.n_layers = synth_layers.size();
      sp.task_type = synth_task == "short_form" ? 1 : 0;
      sp.seed = g.seed;
      sp.prefix = prefix.c_str();
      check(pf_synth_generate(&sp, out_dir.c_str()));
      std::printf("wrote %zu datasets to %s\n", sp.n_tasks, out_dir.c_str());
    } else if (*report) {
      char* s = nullptr;
      check(pf_report_check(out_dir.c_str(), &s));
      OwnedString text(s);
      std::fputs(text.get(), stdout);
    }
  } catch (const Exit& e) {
    std::fprintf(stderr, "probeforge: error: %s\n", e.message.c_str());
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "probeforge: internal error: %s\n", e.what());
    return 3;
  }
  return 0;
}
