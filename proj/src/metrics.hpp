#pragma once

#include <cstddef>
#include <span>

namespace probeforge::metrics {

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr std::size_t kDefaultBins = 10;

struct EvalResult {
  double acc = 0.0;
  double auroc = 0.0;
  double ece = 0.0;
  std::size_t n = 0;
  double threshold = kDefaultThreshold;
};

struct AblationCounts {
  std::size_t correct_turned_incorrect = 0;  // |L1 \ L2|
  std::size_t new_correct = 0;               // |L2 \ L1|
};

struct DeltaPerf {
  double acc = 0.0;
  double auroc = 0.0;
  double ece = 0.0;
};

// Fraction of rows where (score >= threshold) equals the binary label.
double accuracy(std::span<const double> scores, std::span<const int> labels01, double threshold);

// Mann-Whitney AUROC via mid-ranks; ties between a positive and a negative count 1/2.
double auroc(std::span<const double> scores, std::span<const int> labels01);

// Equal-width reliability bins on [0,1], last bin right-closed; empty bins contribute 0.
double ece(std::span<const double> scores, std::span<const int> labels01,
           std::size_t n_bins = kDefaultBins);

EvalResult evaluate(std::span<const double> scores, std::span<const int> labels01,
                    double threshold = kDefaultThreshold, std::size_t n_bins = kDefaultBins);

// Perf(hidden + agnostic) - Perf(hidden), per metric.
DeltaPerf delta_perf(const EvalResult& with_agnostic, const EvalResult& without);

AblationCounts ablation_counts(std::span<const double> scores_without,
                               std::span<const double> scores_with,
                               std::span<const int> labels01, double threshold);

}  // namespace probeforge::metrics
