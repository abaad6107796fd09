#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "common.hpp"

namespace probeforge::metrics {
namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorKind::kArgument, "scores and labels differ in length (" +
                                          std::to_string(scores.size()) + " vs " +
                                          std::to_string(labels.size()) + ")");
  if (scores.empty()) throw Error(ErrorKind::kArgument, "metric over an empty set");
  for (int l : labels)
    if (l != 0 && l != 1) throw Error(ErrorKind::kArgument, "labels must be 0 or 1");
}

}  // namespace

double accuracy(std::span<const double> scores, std::span<const int> labels01, double threshold) {
  check_lengths(scores, labels01);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if ((scores[i] >= threshold ? 1 : 0) == labels01[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double auroc(std::span<const double> scores, std::span<const int> labels01) {
  check_lengths(scores, labels01);
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels01) n_pos += static_cast<std::size_t>(l);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw Error(ErrorKind::kValidation, "AUROC undefined: labels contain a single class");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (doubled) mid-ranks of the positives, kept integral.
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_mid = static_cast<std::uint64_t>(i + 1 + j + 1);
    for (std::size_t t = i; t <= j; ++t)
      if (labels01[order[t]] == 1) doubled_rank_sum += doubled_mid;
    i = j + 1;
  }
  // U = R_pos - n_pos (n_pos + 1) / 2, everything doubled.
  const std::uint64_t doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(doubled_u) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double ece(std::span<const double> scores, std::span<const int> labels01, std::size_t n_bins) {
  check_lengths(scores, labels01);
  if (n_bins == 0) throw Error(ErrorKind::kArgument, "ECE needs at least one bin");
  std::vector<double> score_sum(n_bins, 0.0);
  std::vector<double> label_sum(n_bins, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!(s >= 0.0 && s <= 1.0))
      throw Error(ErrorKind::kArgument, "ECE score outside [0,1] at index " + std::to_string(i));
    const auto bin = std::min(static_cast<std::size_t>(s * static_cast<double>(n_bins)), n_bins - 1);
    score_sum[bin] += s;
    label_sum[bin] += labels01[i];
  }
  // sum_b (n_b / n) |mean_label_b - mean_score_b| = sum_b |label_sum_b - score_sum_b| / n
  double total = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) total += std::abs(label_sum[b] - score_sum[b]);
  return total / static_cast<double>(scores.size());
}

EvalResult evaluate(std::span<const double> scores, std::span<const int> labels01,
                    double threshold, std::size_t n_bins) {
  EvalResult r;
  r.acc = accuracy(scores, labels01, threshold);
  r.auroc = auroc(scores, labels01);
  r.ece = ece(scores, labels01, n_bins);
  r.n = scores.size();
  r.threshold = threshold;
  return r;
}

DeltaPerf delta_perf(const EvalResult& with_agnostic, const EvalResult& without) {
  if (with_agnostic.n != without.n)
    throw Error(ErrorKind::kMismatch, "delta_perf over different test sets (n = " +
                                          std::to_string(with_agnostic.n) + " vs " +
                                          std::to_string(without.n) + ")");
  return {with_agnostic.acc - without.acc, with_agnostic.auroc - without.auroc,
          with_agnostic.ece - without.ece};
}

AblationCounts ablation_counts(std::span<const double> scores_without,
                               std::span<const double> scores_with,
                               std::span<const int> labels01, double threshold) {
  check_lengths(scores_without, labels01);
  check_lengths(scores_with, labels01);
  AblationCounts c;
  for (std::size_t i = 0; i < labels01.size(); ++i) {
    const bool in_l1 = (scores_without[i] >= threshold ? 1 : 0) == labels01[i];
    const bool in_l2 = (scores_with[i] >= threshold ? 1 : 0) == labels01[i];
    if (in_l1 && !in_l2) ++c.correct_turned_incorrect;
    if (in_l2 && !in_l1) ++c.new_correct;
  }
  return c;
}

}  // namespace probeforge::metrics
