#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "agnostic_features.hpp"
#include "hashing.hpp"
#include "labeling.hpp"
#include "parallel.hpp"
#include "probe.hpp"
#include "random.hpp"
#include "text_format.hpp"

namespace probeforge::harness {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kReportVersion = 1;

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + file.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + file.string());
}

void check_name(const std::string& name) {
  if (name.empty()) throw Error(ErrorKind::kValidation, "empty dataset name");
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'))
      throw Error(ErrorKind::kValidation, "dataset name '" + name +
                                            "' may only contain letters, digits, '_' and '.'");
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw Error(ErrorKind::kValidation, where + ": unknown key '" + key + "'");
  }
}

features::AssemblyConfig config_from_json(const json& j) {
  reject_unknown_keys(j, {"mode", "layer", "layers", "k"}, "plan config");
  features::AssemblyConfig c;
  c.mode = features::parse_mode(j.at("mode").get<std::string>());
  if (j.contains("layer")) c.layer = j["layer"].get<int>();
  if (j.contains("layers")) c.layers = j["layers"].get<std::vector<int>>();
  if (j.contains("k")) c.k = j["k"].get<std::size_t>();
  c.include_agnostic = false;
  c.validate();
  return c;
}

ordered_json config_to_json(const features::AssemblyConfig& c) {
  ordered_json j;
  j["mode"] = features::to_string(c.mode);
  switch (c.mode) {
    case features::Mode::kOneLayer: j["layer"] = c.layer; break;
    case features::Mode::kSelected:
      j["layer"] = c.layer;
      j["k"] = c.k;
      break;
    case features::Mode::kMultiLayer: j["layers"] = c.layers; break;
  }
  return j;
}

ordered_json forest_to_json(const forest::Params& p) {
  ordered_json j;
  j["n_trees"] = p.n_trees;
  j["min_samples_leaf"] = p.min_samples_leaf;
  j["max_depth"] = p.max_depth;
  j["max_features"] = p.max_features == forest::MaxFeatures::kSqrt ? "sqrt" : "all";
  return j;
}

// One dataset, loaded and labelled, with its split.
struct Prepared {
  std::optional<dataset::Bundle> bundle;
  std::vector<double> labels;
  std::vector<int> truth;
  dataset::Split split;
  std::string error;
};

struct CellSpec {
  std::size_t transfer = 0;
  std::size_t config = 0;
  bool with_agnostic = false;
  bool keep_probe = false;
};

struct CellOutcome {
  std::optional<metrics::EvalResult> result;
  std::vector<double> scores;
  std::optional<Probe> probe;
  std::string cell_id;
  std::string error;
};

}  // namespace

// ---------------------------------------------------------------------------
// Transfer labels

std::string Transfer::label() const {
  if (in_domain()) return test_set;
  return test_set + "-" + join(train_sets, "&");
}

bool Transfer::in_domain() const {
  return train_sets.size() == 1 && train_sets.front() == test_set;
}

Transfer Transfer::parse(const std::string& label) {
  Transfer t;
  const auto dash = label.find('-');
  if (dash == std::string::npos) {
    t.test_set = label;
    t.train_sets = {label};
  } else {
    t.test_set = label.substr(0, dash);
    const std::string rest = label.substr(dash + 1);
    std::size_t start = 0;
    for (;;) {
      const auto amp = rest.find('&', start);
      t.train_sets.push_back(rest.substr(start, amp - start));
      if (amp == std::string::npos) break;
      start = amp + 1;
    }
  }
  if (t.test_set.empty() || std::any_of(t.train_sets.begin(), t.train_sets.end(),
                                        [](const std::string& s) { return s.empty(); }))
    throw Error(ErrorKind::kValidation, "malformed transfer label '" + label + "'");
  return t;
}

// ---------------------------------------------------------------------------
// Plan

Plan Plan::from_json(const json& j, const fs::path& base_dir) {
  reject_unknown_keys(j,
                      {"datasets", "transfers", "configs", "seed", "threshold", "bins",
                       "train_fraction", "forest", "shap", "shap_max_rows", "pca", "pca_layer",
                       "output_dir"},
                      "plan");
  Plan p;
  p.base_dir = base_dir;
  try {
    for (const auto& d : j.at("datasets")) {
      reject_unknown_keys(d, {"name", "path"}, "plan dataset");
      p.datasets.push_back({d.at("name").get<std::string>(), d.at("path").get<std::string>()});
    }
    for (const auto& t : j.at("transfers")) {
      if (t.is_string()) {
        p.transfers.push_back(Transfer::parse(t.get<std::string>()));
      } else {
        reject_unknown_keys(t, {"train_sets", "test_set"}, "plan transfer");
        p.transfers.push_back(
            {t.at("train_sets").get<std::vector<std::string>>(), t.at("test_set").get<std::string>()});
      }
    }
    for (const auto& c : j.at("configs")) p.configs.push_back(config_from_json(c));
    if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threshold")) p.threshold = j["threshold"].get<double>();
    if (j.contains("bins")) p.bins = j["bins"].get<std::size_t>();
    if (j.contains("train_fraction")) p.train_fraction = j["train_fraction"].get<double>();
    if (j.contains("forest")) {
      const auto& f = j["forest"];
      reject_unknown_keys(f, {"n_trees", "min_samples_leaf", "max_depth", "max_features"}, "plan forest");
      if (f.contains("n_trees")) p.forest.n_trees = f["n_trees"].get<std::size_t>();
      if (f.contains("min_samples_leaf")) p.forest.min_samples_leaf = f["min_samples_leaf"].get<std::size_t>();
      if (f.contains("max_depth")) p.forest.max_depth = f["max_depth"].get<std::size_t>();
      if (f.contains("max_features")) {
        const auto rule = f["max_features"].get<std::string>();
        if (rule != "sqrt" && rule != "all")
          throw Error(ErrorKind::kValidation, "plan forest: max_features must be 'sqrt' or 'all'");
        p.forest.max_features = rule == "sqrt" ? forest::MaxFeatures::kSqrt : forest::MaxFeatures::kAll;
      }
    }
    if (j.contains("shap")) p.shap = j["shap"].get<bool>();
    if (j.contains("shap_max_rows")) p.shap_max_rows = j["shap_max_rows"].get<std::size_t>();
    if (j.contains("pca")) p.pca = j["pca"].get<bool>();
    if (j.contains("pca_layer")) p.pca_layer = j["pca_layer"].get<int>();
    if (j.contains("output_dir")) p.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("plan: ") + e.what());
  }
  p.forest.seed = p.seed;
  p.validate();
  return p;
}

Plan Plan::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::kLoad, "missing file: " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorrupt, file.string() + ": " + e.what());
  }
  return from_json(j, file.parent_path());
}

ordered_json Plan::to_json() const {
  ordered_json j;
  j["datasets"] = ordered_json::array();
  for (const auto& d : datasets) j["datasets"].push_back({{"name", d.name}, {"path", d.path}});
  j["transfers"] = ordered_json::array();
  for (const auto& t : transfers) j["transfers"].push_back(t.label());
  j["configs"] = ordered_json::array();
  for (const auto& c : configs) j["configs"].push_back(config_to_json(c));
  j["seed"] = seed;
  j["threshold"] = threshold;
  j["bins"] = bins;
  j["train_fraction"] = train_fraction;
  j["forest"] = forest_to_json(forest);
  j["shap"] = shap;
  j["shap_max_rows"] = shap_max_rows;
  j["pca"] = pca;
  if (pca_layer) j["pca_layer"] = *pca_layer;
  j["output_dir"] = output_dir;
  return j;
}

void Plan::validate() const {
  std::set<std::string> names;
  for (const auto& d : datasets) {
    check_name(d.name);
    if (!names.insert(d.name).second)
      throw Error(ErrorKind::kValidation, "dataset '" + d.name + "' listed twice");
  }
  for (const auto& t : transfers) {
    if (t.train_sets.empty()) throw Error(ErrorKind::kValidation, "transfer without training sets");
    auto known = [&](const std::string& n) {
      if (!names.count(n))
        throw Error(ErrorKind::kValidation, "transfer '" + t.label() + "' names unknown dataset '" + n + "'");
    };
    known(t.test_set);
    for (const auto& s : t.train_sets) known(s);
    std::set<std::string> unique(t.train_sets.begin(), t.train_sets.end());
    if (unique.size() != t.train_sets.size())
      throw Error(ErrorKind::kValidation, "transfer '" + t.label() + "' repeats a training set");
    if (!t.in_domain() && unique.count(t.test_set))
      throw Error(ErrorKind::kValidation,
                  "cross-task transfer '" + t.label() + "' tests on one of its training sets");
  }
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error(ErrorKind::kValidation, "threshold must lie in (0,1)");
  if (bins == 0) throw Error(ErrorKind::kValidation, "bins must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorKind::kValidation, "train_fraction must lie in (0,1)");
  if (forest.n_trees == 0) throw Error(ErrorKind::kValidation, "forest.n_trees must be >= 1");
  for (const auto& c : configs) c.validate();
}

fs::path Plan::resolve(const DatasetRef& ref) const {
  const fs::path p(ref.path);
  return p.is_absolute() ? p : base_dir / p;
}

// ---------------------------------------------------------------------------
// Running

Report run_plan(const Plan& plan, std::size_t jobs) {
  plan.validate();
  Report report;
  report.plan = plan;

  // Load, hash, label and split every dataset.
  std::map<std::string, Prepared> prepared;
  for (const auto& ref : plan.datasets) {
    Prepared& p = prepared[ref.name];
    const fs::path dir = plan.resolve(ref);
    try {
      auto& hashes = report.input_hashes[ref.name];
      for (const char* f : {dataset::kManifestFile, dataset::kHiddenFile, dataset::kSignalsFile,
                            dataset::kLabelsFile}) {
        if (fs::exists(dir / f)) hashes[f] = git_blob_hash_file(dir / f);
      }
      p.bundle = dataset::load_bundle(dir);
      p.labels = p.bundle->labels ? *p.bundle->labels : labeling::label_bundle(*p.bundle).values;
      p.truth = labeling::binarize(p.labels, plan.threshold);
      p.split = dataset::make_split(p.bundle->manifest.n_samples, plan.seed, plan.train_fraction);
    } catch (const std::exception& e) {
      p.bundle.reset();
      p.error = "dataset '" + ref.name + "': " + e.what();
    }
  }
  {
    std::string digest_input;
    for (const auto& [name, files] : report.input_hashes)
      for (const auto& [file, hash] : files) digest_input += name + "/" + file + " " + hash + "\n";
    report.content_hash = sha1_hex(digest_input);
  }

  const dataset::Manifest* reference = nullptr;
  for (const auto& ref : plan.datasets) {
    const Prepared& p = prepared.at(ref.name);
    if (!p.bundle) continue;
    const auto& m = p.bundle->manifest;
    if (!reference) {
      reference = &m;
    } else if (m.task_type != reference->task_type) {
      throw Error(ErrorKind::kMismatch, "plan mixes task types: '" + reference->dataset_name +
                                            "' is " + to_string(reference->task_type) + ", '" +
                                            ref.name + "' is " + to_string(m.task_type));
    } else if (m.hidden_dim != reference->hidden_dim) {
      throw Error(ErrorKind::kMismatch, "plan mixes hidden_dim " +
                                            std::to_string(reference->hidden_dim) + " and " +
                                            std::to_string(m.hidden_dim));
    }
  }

  // Cells in plan order: transfer x config x {without, with}.
  std::vector<CellSpec> cells;
  std::set<std::pair<std::string, std::size_t>> shap_claimed;
  for (std::size_t t = 0; t < plan.transfers.size(); ++t) {
    for (std::size_t c = 0; c < plan.configs.size(); ++c) {
      for (bool with : {false, true}) {
        CellSpec spec{t, c, with, false};
        const auto& tr = plan.transfers[t];
        if (plan.shap && with && tr.train_sets.size() == 1 &&
            shap_claimed.insert({tr.train_sets.front(), c}).second)
          spec.keep_probe = true;
        cells.push_back(spec);
      }
    }
  }

  std::vector<CellOutcome> outcomes(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    const CellSpec& spec = cells[i];
    const Transfer& tr = plan.transfers[spec.transfer];
    features::AssemblyConfig config = plan.configs[spec.config];
    config.include_agnostic = spec.with_agnostic;
    CellOutcome& out = outcomes[i];

    ordered_json key;
    key["transfer"] = tr.label();
    key["config"] = config_to_json(config);
    key["with_agnostic"] = spec.with_agnostic;
    key["seed"] = plan.seed;
    key["train_fraction"] = plan.train_fraction;
    key["forest"] = forest_to_json(plan.forest);
    std::set<std::string> involved(tr.train_sets.begin(), tr.train_sets.end());
    involved.insert(tr.test_set);
    for (const auto& name : involved) key["inputs"][name] = report.input_hashes[name];
    out.cell_id = sha1_hex(key.dump());

    try {
      std::vector<ProbeSource> sources;
      for (const auto& name : tr.train_sets) {
        const Prepared& p = prepared.at(name);
        if (!p.bundle) throw Error(ErrorKind::kLoad, p.error);
        sources.push_back({&*p.bundle, p.labels, &p.split});
      }
      const Prepared& target = prepared.at(tr.test_set);
      if (!target.bundle) throw Error(ErrorKind::kLoad, target.error);

      Probe probe = train_probe(sources, config, plan.forest, 1);
      const auto view = probe.view(*target.bundle, target.split.test_ids, {});
      out.scores = probe.score(view);
      std::vector<int> truth;
      truth.reserve(target.split.test_ids.size());
      for (std::size_t r : target.split.test_ids) truth.push_back(target.truth[r]);
      out.result = metrics::evaluate(out.scores, truth, plan.threshold, plan.bins);
      if (spec.keep_probe) out.probe = std::move(probe);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  // Reduction in plan order.
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& spec = cells[i];
    const std::string transfer = plan.transfers[spec.transfer].label();
    const std::string config = plan.configs[spec.config].label();
    if (outcomes[i].result) {
      report.results.push_back({transfer, config, spec.with_agnostic, outcomes[i].cell_id,
                                *outcomes[i].result});
    } else {
      report.errors.push_back({transfer, config, spec.with_agnostic, outcomes[i].error});
    }
  }

  for (std::size_t t = 0; t < plan.transfers.size(); ++t) {
    const Transfer& tr = plan.transfers[t];
    std::map<features::Mode, double> first_delta_acc;
    for (std::size_t c = 0; c < plan.configs.size(); ++c) {
      // cells are laid out as [without, with] pairs
      const std::size_t base = 2 * (t * plan.configs.size() + c);
      const CellOutcome& without = outcomes[base];
      const CellOutcome& with = outcomes[base + 1];
      if (!without.result || !with.result) continue;
      const std::string config = plan.configs[c].label();
      const auto delta = metrics::delta_perf(*with.result, *without.result);
      report.deltas.push_back({tr.label(), config, delta});
      const Prepared& target = prepared.at(tr.test_set);
      std::vector<int> truth;
      for (std::size_t r : target.split.test_ids) truth.push_back(target.truth[r]);
      report.ablations.push_back(
          {tr.label(), config,
           metrics::ablation_counts(without.scores, with.scores, truth, plan.threshold),
           truth.size()});
      first_delta_acc.emplace(plan.configs[c].mode, delta.acc);
    }
    OrderingRow row{tr.label(), std::nullopt};
    using features::Mode;
    if (first_delta_acc.count(Mode::kSelected) && first_delta_acc.count(Mode::kOneLayer) &&
        first_delta_acc.count(Mode::kMultiLayer)) {
      row.holds = first_delta_acc[Mode::kSelected] >= first_delta_acc[Mode::kOneLayer] &&
                  first_delta_acc[Mode::kOneLayer] >= first_delta_acc[Mode::kMultiLayer];
    }
    report.ordering.push_back(row);
  }

  // Mean |SHAP| of each single-source, with-agnostic probe on its own test split.
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!outcomes[i].probe) continue;
    const Probe& probe = *outcomes[i].probe;
    const std::string& source = plan.transfers[cells[i].transfer].train_sets.front();
    const std::string config = plan.configs[cells[i].config].label();
    try {
      const Prepared& p = prepared.at(source);
      std::vector<std::size_t> rows = p.split.test_ids;
      if (plan.shap_max_rows > 0 && rows.size() > plan.shap_max_rows) rows.resize(plan.shap_max_rows);
      const auto view = probe.view(*p.bundle, rows, {});
      const auto attributions = shap::shap_forest(probe.model, view.x, jobs);
      report.shap_tables.push_back({source, config, shap::mean_abs_table(attributions, view.agnostic_start)});
    } catch (const std::exception& e) {
      report.errors.push_back({source, config, true, std::string("shap: ") + e.what()});
    }
  }

  if (plan.pca) {
    const int layer = plan.pca_layer ? *plan.pca_layer
                                     : (plan.configs.empty() ? 15 : plan.configs.front().layer);
    try {
      std::vector<const dataset::Bundle*> bundles;
      std::vector<std::string> names;
      for (const auto& ref : plan.datasets) {
        const Prepared& p = prepared.at(ref.name);
        if (!p.bundle) throw Error(ErrorKind::kLoad, p.error);
        bundles.push_back(&*p.bundle);
        names.push_back(ref.name);
      }
      if (!bundles.empty()) {
        auto projection = pca::project_layer(bundles, layer, names);
        report.pca_rows = std::move(projection.samples);
        report.pca_explained_variance = std::move(projection.explained_variance);
      }
    } catch (const std::exception& e) {
      report.errors.push_back({"", "pca", std::nullopt, std::string("pca: ") + e.what()});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Output

std::string results_csv(const Report& report) {
  std::string out = "transfer_pair,config,with_agnostic,acc,auroc,ece\n";
  for (const auto& r : report.results)
    out += csv_field(r.transfer) + "," + r.config + "," + (r.with_agnostic ? "true" : "false") + "," +
           format_report(r.result.acc) + "," + format_report(r.result.auroc) + "," +
           format_report(r.result.ece) + "\n";
  return out;
}

std::string delta_csv(const Report& report) {
  std::string out = "transfer_pair,config,delta_acc,delta_auroc,delta_ece\n";
  for (const auto& d : report.deltas)
    out += csv_field(d.transfer) + "," + d.config + "," + format_report(d.delta.acc) + "," +
           format_report(d.delta.auroc) + "," + format_report(d.delta.ece) + "\n";
  return out;
}

std::string ablation_csv(const Report& report) {
  std::string out = "transfer_pair,config,correct_turned_incorrect,new_correct,n\n";
  for (const auto& a : report.ablations)
    out += csv_field(a.transfer) + "," + a.config + "," +
           std::to_string(a.counts.correct_turned_incorrect) + "," +
           std::to_string(a.counts.new_correct) + "," + std::to_string(a.n) + "\n";
  return out;
}

ordered_json report_json(const Report& report) {
  ordered_json j;
  j["format_version"] = kReportVersion;
  j["plan"] = report.plan.to_json();
  j["inputs"] = ordered_json::object();
  for (const auto& [name, files] : report.input_hashes)
    for (const auto& [file, hash] : files) j["inputs"][name][file] = hash;
  j["content_hash"] = report.content_hash;
  j["results"] = ordered_json::array();
  for (const auto& r : report.results) {
    ordered_json row;
    row["transfer_pair"] = r.transfer;
    row["config"] = r.config;
    row["with_agnostic"] = r.with_agnostic;
    row["cell_id"] = r.cell_id;
    row["acc"] = r.result.acc;
    row["auroc"] = r.result.auroc;
    row["ece"] = r.result.ece;
    row["n"] = r.result.n;
    row["threshold"] = r.result.threshold;
    j["results"].push_back(row);
  }
  j["delta_perf"] = ordered_json::array();
  for (const auto& d : report.deltas) {
    ordered_json row;
    row["transfer_pair"] = d.transfer;
    row["config"] = d.config;
    row["delta_acc"] = d.delta.acc;
    row["delta_auroc"] = d.delta.auroc;
    row["delta_ece"] = d.delta.ece;
    j["delta_perf"].push_back(row);
  }
  j["ablation"] = ordered_json::array();
  for (const auto& a : report.ablations) {
    ordered_json row;
    row["transfer_pair"] = a.transfer;
    row["config"] = a.config;
    row["correct_turned_incorrect"] = a.counts.correct_turned_incorrect;
    row["new_correct"] = a.counts.new_correct;
    row["n"] = a.n;
    j["ablation"].push_back(row);
  }
  j["ordering_check"] = ordered_json::array();
  for (const auto& o : report.ordering) {
    ordered_json row;
    row["transfer_pair"] = o.transfer;
    row["holds"] = o.holds ? ordered_json(*o.holds) : ordered_json(nullptr);
    j["ordering_check"].push_back(row);
  }
  j["errors"] = ordered_json::array();
  for (const auto& e : report.errors) {
    ordered_json row;
    row["transfer_pair"] = e.transfer;
    row["config"] = e.config;
    row["with_agnostic"] = e.with_agnostic ? ordered_json(*e.with_agnostic) : ordered_json(nullptr);
    row["message"] = e.message;
    j["errors"].push_back(row);
  }
  j["shap_tables"] = ordered_json::array();
  for (const auto& s : report.shap_tables) j["shap_tables"].push_back(s.file_name());
  j["pca"] = {{"enabled", report.plan.pca}, {"explained_variance", report.pca_explained_variance}};
  return j;
}

void emit_report(const Report& report, const fs::path& output_dir) {
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec || !fs::is_directory(output_dir))
    throw Error(ErrorKind::kIo, "cannot create output directory " + output_dir.string());
  write_text(output_dir / "results.csv", results_csv(report));
  write_text(output_dir / "delta_perf.csv", delta_csv(report));
  write_text(output_dir / "ablation.csv", ablation_csv(report));
  for (const auto& s : report.shap_tables) write_text(output_dir / s.file_name(), s.table.to_csv());
  write_text(output_dir / "pca.csv", pca::to_csv(report.pca_rows));
  write_text(output_dir / "report.json", report_json(report).dump(2) + "\n");
}

std::string check_report(const fs::path& output_dir) {
  const fs::path file = output_dir / "report.json";
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::kLoad, "missing file: " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorrupt, file.string() + ": " + e.what());
  }

  std::ostringstream out;
  try {
    std::map<std::tuple<std::string, std::string, bool>, json> results;
    for (const auto& r : j.at("results"))
      results[{r.at("transfer_pair").get<std::string>(), r.at("config").get<std::string>(),
               r.at("with_agnostic").get<bool>()}] = r;
    auto paired = [&](const json& row, bool with) -> const json& {
      const auto key = std::make_tuple(row.at("transfer_pair").get<std::string>(),
                                       row.at("config").get<std::string>(), with);
      auto it = results.find(key);
      if (it == results.end())
        throw Error(ErrorKind::kValidation, "row for " + std::get<0>(key) + " / " + std::get<1>(key) +
                                                " has no paired result");
      return it->second;
    };
    out << "transfer_pair,config,acc_hidden,acc_hidden_agnostic,delta_acc,delta_auroc,delta_ece\n";
    for (const auto& d : j.at("delta_perf")) {
      const json& w = paired(d, true);
      const json& wo = paired(d, false);
      for (const char* m : {"acc", "auroc", "ece"}) {
        const double expect = w.at(m).get<double>() - wo.at(m).get<double>();
        if (expect != d.at(std::string("delta_") + m).get<double>())
          throw Error(ErrorKind::kValidation, "delta_" + std::string(m) + " of " +
                                                  d["transfer_pair"].get<std::string>() + " / " +
                                                  d["config"].get<std::string>() +
                                                  " does not equal the difference of its results");
      }
      out << csv_field(d["transfer_pair"].get<std::string>()) << "," << d["config"].get<std::string>()
          << "," << format_report(wo["acc"].get<double>()) << ","
          << format_report(w["acc"].get<double>()) << ","
          << format_report(d["delta_acc"].get<double>()) << ","
          << format_report(d["delta_auroc"].get<double>()) << ","
          << format_report(d["delta_ece"].get<double>()) << "\n";
    }
    for (const auto& a : j.at("ablation")) {
      const json& w = paired(a, true);
      const json& wo = paired(a, false);
      const auto n = a.at("n").get<std::size_t>();
      const auto correct_with = std::llround(w.at("acc").get<double>() * static_cast<double>(n));
      const auto correct_without = std::llround(wo.at("acc").get<double>() * static_cast<double>(n));
      const auto lost = a.at("correct_turned_incorrect").get<long long>();
      const auto gained = a.at("new_correct").get<long long>();
      if (correct_with - correct_without != gained - lost)
        throw Error(ErrorKind::kValidation, "ablation identity fails for " +
                                                a["transfer_pair"].get<std::string>() + " / " +
                                                a["config"].get<std::string>());
    }
    std::size_t holds = 0, checked = 0;
    for (const auto& o : j.at("ordering_check")) {
      if (o.at("holds").is_null()) continue;
      ++checked;
      if (o["holds"].get<bool>()) ++holds;
    }
    out << "ordering selected >= one_layer >= multi_layer holds for " << holds << " of " << checked
        << " transfers\n";
    out << "errors: " << j.at("errors").size() << "\n";
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorrupt, file.string() + ": " + e.what());
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic data

std::vector<dataset::Bundle> synth_generate(const SynthParams& params) {
  if (params.hidden_dim < 8) throw Error(ErrorKind::kArgument, "synthetic hidden_dim must be >= 8");
  if (params.n_tasks == 0) throw Error(ErrorKind::kArgument, "n_tasks must be >= 1");
  if (params.n_tasks > params.hidden_dim)
    throw Error(ErrorKind::kArgument, "n_tasks (" + std::to_string(params.n_tasks) +
                                          ") exceeds hidden_dim (" +
                                          std::to_string(params.hidden_dim) +
                                          "): orthogonal task directions are impossible");
  if (params.n_per_task < 2) throw Error(ErrorKind::kArgument, "n_per_task must be >= 2");
  if (params.layers.empty()) throw Error(ErrorKind::kArgument, "synthetic layers must be non-empty");
  check_name(params.prefix + "0");

  static const std::vector<std::string> kWords = {
      "paris", "river", "seven", "copper", "violin", "glacier", "falcon", "orchid", "marble", "comet",
      "tundra", "lantern", "harbor", "saffron", "quartz", "meadow", "canyon", "ember", "walnut", "prism"};
  const std::size_t half = kWords.size() / 2;
  const std::size_t block = params.hidden_dim / params.n_tasks;
  const double unit = 1.0 / std::sqrt(static_cast<double>(block));
  const std::size_t dim = params.hidden_dim;

  std::vector<dataset::Bundle> out;
  for (std::size_t t = 0; t < params.n_tasks; ++t) {
    rng::Rng gen(rng::derive_seed(params.seed, t));
    dataset::Bundle b;
    auto& m = b.manifest;
    m.dataset_name = params.prefix + std::to_string(t);
    m.model_name = "synthetic";
    m.task_type = params.task_type;
    m.label_kind = params.task_type == TaskType::kMultipleChoice ? LabelKind::kExactMatch
                                                                 : LabelKind::kRougeL;
    m.n_samples = params.n_per_task;
    m.hidden_dim = dim;
    m.layers = params.layers;
    b.hidden = Matrix<float>(m.n_samples, m.row_width());

    for (std::size_t i = 0; i < m.n_samples; ++i) {
      const bool correct = gen.uniform() < 0.5;
      auto row = b.hidden.row(i);
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        for (std::size_t j = 0; j < dim; ++j) {
          const bool on_direction = j >= t * block && j < (t + 1) * block;
          const double signal = correct && on_direction ? params.beta * unit : 0.0;
          row[l * dim + j] = static_cast<float>(signal + params.noise * gen.normal());
        }
      }

      dataset::SampleSignals s;
      s.id = m.dataset_name + "_" + std::to_string(i);
      if (params.task_type == TaskType::kMultipleChoice) {
        const std::size_t gold = gen.below(4);
        std::size_t answer = gold;
        if (!correct) answer = (gold + 1 + gen.below(3)) % 4;
        s.choice_logits.resize(4);
        for (auto& z : s.choice_logits) z = gen.normal();
        if (correct) s.choice_logits[gold] += params.gamma;
        s.answer = std::string(1, static_cast<char>('A' + answer));
        s.gold = {std::string(1, static_cast<char>('A' + gold))};
      } else {
        const std::size_t n_tokens = 1 + gen.below(6);
        const double mean = correct ? 1.0 / (1.0 + params.gamma) : 1.0;
        for (std::size_t k = 0; k < n_tokens; ++k) {
          s.token_logprobs.push_back(-gen.exponential(mean));
          s.token_entropies.push_back(gen.exponential(mean));
        }
        const std::string gold = kWords[gen.below(half)] + " " + kWords[gen.below(half)];
        s.gold = {gold};
        s.answer = correct ? gold : kWords[half + gen.below(half)] + " " + kWords[half + gen.below(half)];
      }
      b.signals.push_back(std::move(s));
    }
    dataset::validate_bundle(b);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace probeforge::harness
