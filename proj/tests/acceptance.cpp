// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "agnostic_features.hpp"
#include "feature_assembly.hpp"
#include "forest.hpp"
#include "harness.hpp"
#include "labeling.hpp"
#include "metrics.hpp"
#include "oracles.hpp"
#include "random.hpp"
#include "support.hpp"
#include "tree_shap.hpp"

using namespace probeforge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("%s  %-28s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Regression {
  FeatureMatrix x;
  std::vector<double> y;
};

Regression random_regression(std::size_t n, std::size_t p, std::uint64_t seed, bool grid) {
  rng::Rng gen(seed);
  Regression d{FeatureMatrix(n, p), std::vector<double>(n)};
  for (auto& v : d.x.data())
    v = grid ? static_cast<float>(gen.below(5)) / 4.0f : static_cast<float>(gen.uniform());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < p; ++j) s += (j % 2 ? -0.7 : 1.0) * d.x(i, j);
    d.y[i] = 1.0 / (1.0 + std::exp(-s + 0.3 * gen.normal()));
  }
  return d;
}

Outcome treeshap_oracle() {
  rng::Rng gen(1001);
  double worst = 0;
  const auto t0 = Clock::now();
  for (int f = 0; f < 50; ++f) {
    const std::size_t p = 1 + gen.below(12);
    forest::Params params;
    params.n_trees = 1 + gen.below(5);
    params.max_depth = 1 + gen.below(4);
    params.min_samples_leaf = 1;
    params.seed = 500 + f;
    const auto d = random_regression(150, p, 700 + f, true);
    const auto model = forest::train(d.x, d.y, params);
    for (int r = 0; r < 20; ++r) {
      std::vector<float> x(p);
      for (auto& v : x) v = static_cast<float>(gen.below(5)) / 4.0f;
      const auto mine = shap::shap_forest(model, x);
      const auto ref = oracle::brute_force_shapley(model.trees(), x);
      worst = std::max(worst, std::abs(mine.phi0 - ref.phi0));
      for (std::size_t j = 0; j < p; ++j) worst = std::max(worst, std::abs(mine.phi[j] - ref.phi[j]));
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst <= 1e-6 && secs < 60.0, fmt("max |dphi| %.3g over 1000 inputs, %.1fs", worst, secs)};
}

Outcome shap_local_accuracy() {
  const auto d = random_regression(500, 10, 1002, false);
  forest::Params params;
  params.n_trees = 200;
  const auto model = forest::train(d.x, d.y, params);
  rng::Rng gen(1003);
  FeatureMatrix x(1000, 10);
  for (auto& v : x.data()) v = static_cast<float>(gen.uniform(-0.2, 1.2));
  const auto attrs = shap::shap_forest(model, x);
  double worst = 0;
  for (std::size_t r = 0; r < 1000; ++r) {
    double total = attrs[r].phi0;
    for (double v : attrs[r].phi) total += v;
    worst = std::max(worst, std::abs(total - model.predict_row(x.row(r))));
  }
  return {worst <= 1e-6, fmt("max |phi0 + sum phi - f(x)| %.3g", worst)};
}

Outcome auroc_oracle() {
  rng::Rng gen(1004);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + gen.below(1999);
    const std::size_t levels = t % 2 ? 1 + gen.below(5) : 1000000;  // odd instances: heavy ties
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(gen.below(levels));
      y[i] = gen.uniform() < 0.3 ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    worst = std::max(worst, std::abs(metrics::auroc(s, y) - oracle::auroc_pairs(s, y)));
  }
  return {worst <= 1e-9, fmt("max |diff| %.3g on 100 instances", worst)};
}

std::string random_text(rng::Rng& gen, std::size_t max_words) {
  static const char* vocab[] = {"the", "a", "cat", "Dog", "ran", "over", "hill", "42", "x", "blue"};
  static const char* seps[] = {" ", "  ", ", ", ". ", "-", "!"};
  std::string out;
  const std::size_t n = gen.below(max_words + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += seps[gen.below(6)];
    out += vocab[gen.below(10)];
  }
  return out;
}

Outcome rouge_oracle() {
  rng::Rng gen(1005);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const auto a = random_text(gen, 12), b = random_text(gen, 12);
    const auto ta = labeling::tokenize(a), tb = labeling::tokenize(b);
    if (ta != oracle::split_tokens(a) || labeling::lcs_length(ta, tb) != oracle::lcs(ta, tb) ||
        labeling::rouge_l(a, b) != oracle::rouge_f(a, b))
      ++mismatches;
  }
  int identity_bad = 0, disjoint_bad = 0;
  for (int t = 0; t < 200; ++t) {
    auto a = random_text(gen, 10);
    if (a.empty()) a = "cat";
    if (labeling::rouge_l(a, a) != 1.0) ++identity_bad;
    std::string shifted;
    for (const auto& w : labeling::tokenize(a)) shifted += w + "zz ";  // shares no token with a
    if (labeling::rouge_l(a, shifted) != 0.0) ++disjoint_bad;
  }
  return {mismatches == 0 && identity_bad == 0 && disjoint_bad == 0,
          fmt("%g/200 pair mismatches, identity failures %g, disjoint failures %g", mismatches,
              identity_bad, disjoint_bad)};
}

Outcome pearson_oracle() {
  rng::Rng gen(1006);
  int mismatches = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 3 + gen.below(198);
    const std::size_t p = 2 + gen.below(49);
    Matrix<float> x(n, p);
    std::vector<double> y(n);
    for (auto& v : y) v = gen.normal();
    for (std::size_t c = 0; c < p; ++c) {
      const int kind = static_cast<int>(gen.below(6));
      for (std::size_t r = 0; r < n; ++r) {
        if (c > 0 && kind == 0) x(r, c) = x(r, c - 1);        // duplicate column
        else if (c > 0 && kind == 1) x(r, c) = -x(r, c - 1);  // negated column
        else if (kind == 2) x(r, c) = 1.5f;                   // constant
        else x(r, c) = static_cast<float>(0.5 * y[r] * (c % 3) + gen.normal());
      }
    }
    const std::size_t k = 1 + gen.below(p);
    const auto sel = features::fit_selection(x, y, k);
    auto ref = oracle::rank_columns(x, y);
    ref.resize(k);
    if (sel.source_columns != ref) ++mismatches;
  }
  return {mismatches == 0, fmt("%g/50 ranking mismatches", mismatches)};
}

Outcome feature_widths() {
  const std::vector<int> layers{13, 14, 15, 16, 17};
  auto mc = testing_support::mc_bundle(12, 4096, layers, 1007, "mc");
  auto sf = testing_support::sf_bundle(12, 4096, layers, 1008, "sf");
  const auto split = dataset::make_split(12, 0, 0.75);
  std::vector<std::size_t> got;
  for (const auto* b : {&mc, &sf}) {
    const auto labels = labeling::label_bundle(*b).values;
    for (auto mode : {features::Mode::kOneLayer, features::Mode::kSelected, features::Mode::kMultiLayer}) {
      features::AssemblyConfig cfg;
      cfg.mode = mode;
      cfg.include_agnostic = true;
      const auto a = features::assemble(*b, labels, split, cfg);
      got.push_back(a.train.x.cols());
    }
  }
  // mc: one, selected, multi; sf: one, selected, multi
  const std::vector<std::size_t> want{4101, 305, 20485, 4100, 304, 20484};
  std::string detail;
  for (auto w : got) detail += std::to_string(w) + " ";
  return {got == want, "widths " + detail};
}

Outcome entropy_checks() {
  const auto u = agnostic::mc_features(std::vector<double>{0.3, 0.3, 0.3, 0.3});
  const double err = std::abs(u[4] - std::log(4.0));
  rng::Rng gen(1009);
  double worst = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> z(4), shifted(4);
    const double c = gen.uniform(-50, 50);
    for (int i = 0; i < 4; ++i) {
      z[i] = gen.normal() * 4.0;
      shifted[i] = z[i] + c;
    }
    const auto a = agnostic::mc_features(z), b = agnostic::mc_features(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return {err <= 1e-12 && worst <= 1e-9, fmt("|H(uniform) - ln4| %.3g, max shift drift %.3g", err, worst)};
}

Outcome ece_checks() {
  std::vector<double> s;
  std::vector<int> y;
  for (int b = 0; b < 4; ++b)
    for (int i = 0; i < 8; ++i) {
      s.push_back(0.125 + 0.25 * b);
      y.push_back(i < 1 + 2 * b ? 1 : 0);
    }
  const double zero = metrics::ece(s, y, 4);
  const double one = metrics::ece(std::vector<double>{1, 1, 0, 0}, std::vector<int>{0, 0, 1, 1}, 10);

  // calibrated base: bin b holds 20 samples at 0.05 + 0.1b with 1 + 2b positives
  std::vector<double> sweep;
  for (int k = 0; k < 10; ++k) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int b = 0; b < 10; ++b)
      for (int i = 0; i < 20; ++i) {
        scores.push_back(0.05 + 0.1 * b + 0.005 * k);
        labels.push_back(i < 1 + 2 * b ? 1 : 0);
      }
    sweep.push_back(metrics::ece(scores, labels, 10));
  }
  bool increasing = true;
  for (std::size_t k = 1; k < sweep.size(); ++k) increasing = increasing && sweep[k] > sweep[k - 1];
  return {zero == 0.0 && one == 1.0 && increasing,
          fmt("calibrated %g, inverted %g, sweep end %.4f", zero, one, sweep.back()) +
              (increasing ? " strictly increasing" : " NOT increasing")};
}

Outcome forest_checks() {
  rng::Rng gen(1010);
  auto make = [&](std::size_t n) {
    Regression d{FeatureMatrix(n, 5), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 5; ++j) d.x(i, j) = static_cast<float>(gen.uniform());
      d.y[i] = d.x(i, 0);
    }
    return d;
  };
  const auto train = make(500), test = make(500);
  forest::Params params;
  params.n_trees = 100;
  const auto m1 = forest::train(train.x, train.y, params, 1);
  const auto m4 = forest::train(train.x, train.y, params, 4);
  const auto m8 = forest::train(train.x, train.y, params, 8);
  const auto p1 = m1.predict(test.x, 1);
  const bool same = p1 == m4.predict(test.x, 4) && p1 == m8.predict(test.x, 8);
  const double mean = std::accumulate(test.y.begin(), test.y.end(), 0.0) / 500.0;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    ss_res += (p1[i] - test.y[i]) * (p1[i] - test.y[i]);
    ss_tot += (test.y[i] - mean) * (test.y[i] - mean);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  return {same && r2 >= 0.8, fmt("held-out R^2 %.4f", r2) + (same ? ", 1/4/8 workers identical" : ", workers differ")};
}

// --- synthetic end-to-end --------------------------------------------------

struct SynthRun {
  std::vector<harness::Report> reports;
  std::vector<double> gaps;
  std::vector<double> auroc_without;
};

harness::Plan synth_plan(const fs::path& root, std::uint64_t seed) {
  nlohmann::json j;
  j["datasets"] = {{{"name", "task0"}, {"path", "task0"}}, {{"name", "task1"}, {"path", "task1"}}};
  j["transfers"] = {"task1-task0"};
  j["configs"] = {{{"mode", "one_layer"}, {"layer", 15}}};
  j["seed"] = seed;
  j["shap_max_rows"] = 50;
  return harness::Plan::from_json(j, root);
}

SynthRun run_synthetic(double gamma, const fs::path& scratch) {
  SynthRun out;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const fs::path root = scratch / ("g" + std::to_string(static_cast<int>(gamma)) + "_s" + std::to_string(seed));
    harness::SynthParams sp;
    sp.n_tasks = 2;
    sp.n_per_task = 2000;
    sp.hidden_dim = 64;
    sp.gamma = gamma;
    sp.seed = seed;
    for (const auto& b : harness::synth_generate(sp)) dataset::write_bundle(b, root / b.manifest.dataset_name);
    auto report = harness::run_plan(synth_plan(root, seed), 0);
    if (!report.errors.empty()) throw Error(ErrorKind::kValidation, report.errors.front().message);
    out.gaps.push_back(report.deltas.at(0).delta.auroc);
    out.auroc_without.push_back(report.results.at(0).result.auroc);
    out.reports.push_back(std::move(report));
  }
  return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

}  // namespace

int main() {
  report("treeshap_oracle", treeshap_oracle);
  report("shap_local_accuracy", shap_local_accuracy);
  report("auroc_oracle", auroc_oracle);
  report("rouge_l_oracle", rouge_oracle);
  report("pearson_selection_oracle", pearson_oracle);
  report("feature_widths", feature_widths);
  report("entropy", entropy_checks);
  report("ece", ece_checks);
  report("forest_determinism_quality", forest_checks);

  testing_support::TempDir scratch("acceptance");
  SynthRun with_gamma, no_gamma;
  double synth_secs = 0;
  report("delta_perf_synthetic", [&] {
    const auto t0 = Clock::now();
    with_gamma = run_synthetic(3.0, scratch.path());
    no_gamma = run_synthetic(0.0, scratch.path());
    synth_secs = std::chrono::duration<double>(Clock::now() - t0).count();
    int hits = 0;
    std::string gaps;
    for (double g : with_gamma.gaps) {
      hits += g >= 0.05;
      gaps += fmt("%.3f ", g);
    }
    const double null_gap = mean_of(no_gamma.gaps);
    int null_within = 0;
    for (double g : no_gamma.gaps) null_within += std::abs(g) <= 0.03;
    const double base = mean_of(with_gamma.auroc_without);
    const bool ok = hits >= 8 && std::abs(null_gap) <= 0.03 && synth_secs < 300.0;
    return Outcome{ok, fmt("%g/10 seeds gap >= 0.05; mean gap at gamma=0 %+.4f; mean hidden-only AUROC %.3f", hits,
                           null_gap, base) +
                           fmt("; %g/10 gamma=0 seeds within 0.03; %.0fs; gaps ", null_within, synth_secs) + gaps};
  });

  report("ablation_identity", [&] {
    std::size_t cells = 0, bad = 0;
    for (const auto* run : {&with_gamma, &no_gamma}) {
      for (const auto& r : run->reports) {
        for (std::size_t i = 0; i < r.ablations.size(); ++i) {
          const auto& ab = r.ablations[i];
          const auto& without = r.results.at(2 * i).result;
          const auto& with = r.results.at(2 * i + 1).result;
          const double n = static_cast<double>(ab.n);
          // accuracies are k/n; compare the integer numerators
          const long k_with = std::lround(with.acc * n), k_without = std::lround(without.acc * n);
          const bool integral = std::abs(with.acc * n - double(k_with)) < 1e-6 &&
                                std::abs(without.acc * n - double(k_without)) < 1e-6;
          const long rhs = long(ab.counts.new_correct) - long(ab.counts.correct_turned_incorrect);
          if (!integral || k_with - k_without != rhs || ab.n != with.n) ++bad;
          ++cells;
        }
      }
    }
    return Outcome{cells == 20 && bad == 0, fmt("%g cells checked, %g violations", double(cells), double(bad))};
  });

  report("report_stability", [&] {
    const fs::path root = scratch / "g3_s0";
    const auto plan = synth_plan(root, 0);
    harness::emit_report(harness::run_plan(plan, 1), scratch / "rerun_a");
    harness::emit_report(harness::run_plan(plan, 4), scratch / "rerun_b");
    std::size_t files = 0, differ = 0;
    for (const auto& e : fs::directory_iterator(scratch / "rerun_a")) {
      ++files;
      if (slurp(e.path()) != slurp(scratch / "rerun_b" / e.path().filename())) ++differ;
    }
    for (const auto& e : fs::directory_iterator(scratch / "rerun_b"))
      if (!fs::exists(scratch / "rerun_a" / e.path().filename())) ++differ;
    return Outcome{files >= 5 && differ == 0, fmt("%g files compared, %g differ", double(files), double(differ))};
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
