#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis_pca.hpp"
#include "dataset_store.hpp"
#include "feature_assembly.hpp"
#include "forest.hpp"
#include "metrics.hpp"
#include "tree_shap.hpp"

namespace probeforge::harness {

// "A" (in-domain), "B-A" (train A, test B), "C-A&B" (train A and B, test C).
struct Transfer {
  std::vector<std::string> train_sets;
  std::string test_set;

  std::string label() const;
  bool in_domain() const;
  static Transfer parse(const std::string& label);

  friend bool operator==(const Transfer&, const Transfer&) = default;
};

struct DatasetRef {
  std::string name;
  std::string path;  // as written in the plan; resolved against the plan's directory
};

struct Plan {
  std::vector<DatasetRef> datasets;
  std::vector<Transfer> transfers;
  // Each entry runs twice, without and with agnostic features; include_agnostic is ignored.
  std::vector<features::AssemblyConfig> configs;
  std::uint64_t seed = 42;
  double threshold = metrics::kDefaultThreshold;
  std::size_t bins = metrics::kDefaultBins;
  double train_fraction = 0.8;
  forest::Params forest;
  bool shap = true;
  std::size_t shap_max_rows = 0;  // 0 = whole test split
  bool pca = true;
  std::optional<int> pca_layer;   // defaults to the first config's layer
  std::string output_dir;
  std::filesystem::path base_dir;  // not serialized

  static Plan from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static Plan load(const std::filesystem::path& file);
  nlohmann::ordered_json to_json() const;
  void validate() const;
  std::filesystem::path resolve(const DatasetRef& ref) const;
};

struct ResultRow {
  std::string transfer;
  std::string config;
  bool with_agnostic = false;
  std::string cell_id;
  metrics::EvalResult result;
};

struct DeltaRow {
  std::string transfer;
  std::string config;
  metrics::DeltaPerf delta;
};

struct AblationRow {
  std::string transfer;
  std::string config;
  metrics::AblationCounts counts;
  std::size_t n = 0;
};

struct OrderingRow {
  std::string transfer;
  std::optional<bool> holds;  // selected >= one_layer >= multi_layer on delta acc; unset if a mode is missing
};

struct CellError {
  std::string transfer;
  std::string config;
  std::optional<bool> with_agnostic;
  std::string message;
};

struct ShapOutput {
  std::string dataset;
  std::string config;
  shap::ShapTable table;

  std::string file_name() const { return "shap_" + dataset + "_" + config + ".csv"; }
};

struct Report {
  Plan plan;
  std::map<std::string, std::map<std::string, std::string>> input_hashes;  // dataset -> file -> blob hash
  std::string content_hash;
  std::vector<ResultRow> results;
  std::vector<DeltaRow> deltas;
  std::vector<AblationRow> ablations;
  std::vector<OrderingRow> ordering;
  std::vector<CellError> errors;
  std::vector<ShapOutput> shap_tables;
  std::vector<pca::ProjectedSample> pca_rows;
  std::vector<double> pca_explained_variance;
};

Report run_plan(const Plan& plan, std::size_t jobs = 0);

// results.csv, delta_perf.csv, ablation.csv, shap_<dataset>_<config>.csv, pca.csv, report.json
void emit_report(const Report& report, const std::filesystem::path& output_dir);

std::string results_csv(const Report& report);
std::string delta_csv(const Report& report);
std::string ablation_csv(const Report& report);
nlohmann::ordered_json report_json(const Report& report);

// Re-derives every delta and ablation identity from report.json; throws
// Error(kValidation) on the first inconsistency, otherwise returns a summary table.
std::string check_report(const std::filesystem::path& output_dir);

struct SynthParams {
  std::size_t n_tasks = 2;
  std::size_t n_per_task = 2000;
  std::size_t hidden_dim = 64;
  std::vector<int> layers{15};
  TaskType task_type = TaskType::kMultipleChoice;
  double beta = 3.0;   // hidden-state signal along the task's own direction
  double gamma = 3.0;  // strength of the task-independent confidence signal
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::string prefix = "task";
};

// Per task t: c ~ Bernoulli(1/2); every layer block is c * beta * u_t + noise,
// where the u_t have disjoint supports (so they are orthogonal and carry no
// signal across tasks). The output signals carry a confidence shift of size
// gamma for correct answers, identically for every task.
std::vector<dataset::Bundle> synth_generate(const SynthParams& params);

}  // namespace probeforge::harness
