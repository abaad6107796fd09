#include "agnostic_features.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace probeforge::agnostic {

AgnosticVector mc_features(std::span<const double> choice_logits) {
  if (choice_logits.size() != 4)
    throw Error(ErrorKind::kArgument, "mc_features expects exactly 4 logits");
  for (double z : choice_logits)
    if (!std::isfinite(z)) throw Error(ErrorKind::kValidation, "non-finite choice logit");

  const double zmax = *std::max_element(choice_logits.begin(), choice_logits.end());
  double e[4];
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    e[i] = std::exp(choice_logits[i] - zmax);
    total += e[i];
  }
  AgnosticVector out(5);
  double entropy = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double p = e[i] / total;
    out[i] = p;
    if (p > 0.0) entropy -= p * std::log(p);  // 0 log 0 := 0
  }
  std::sort(out.begin(), out.begin() + 4, std::greater<>());
  out[4] = std::clamp(entropy, 0.0, std::log(4.0));
  return out;
}

AgnosticVector sf_features(std::span<const double> token_logprobs,
                           std::span<const double> token_entropies) {
  if (token_logprobs.empty() || token_entropies.empty())
    throw Error(ErrorKind::kArgument, "sf_features needs at least one token");
  if (token_logprobs.size() != token_entropies.size())
    throw Error(ErrorKind::kArgument, "token_logprobs and token_entropies differ in length");

  double nll_sum = 0.0, nll_max = 0.0, h_sum = 0.0, h_max = 0.0;
  for (std::size_t n = 0; n < token_logprobs.size(); ++n) {
    const double nll = -token_logprobs[n];
    const double h = token_entropies[n];
    nll_sum += nll;
    h_sum += h;
    if (n == 0 || nll > nll_max) nll_max = nll;
    if (n == 0 || h > h_max) h_max = h;
  }
  const double count = static_cast<double>(token_logprobs.size());
  return {nll_sum / count, nll_max, h_sum / count, h_max};
}

AgnosticVector sample_features(TaskType task, const dataset::SampleSignals& s) {
  return task == TaskType::kMultipleChoice ? mc_features(s.choice_logits)
                                           : sf_features(s.token_logprobs, s.token_entropies);
}

Matrix<double> batch_features(const dataset::Bundle& bundle) {
  const TaskType task = bundle.manifest.task_type;
  const std::size_t m = agnostic_arity(task);
  Matrix<double> out(bundle.signals.size(), m);
  for (std::size_t i = 0; i < bundle.signals.size(); ++i) {
    AgnosticVector v;
    try {
      v = sample_features(task, bundle.signals[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "sample '" + bundle.signals[i].id + "': " + e.what());
    }
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace probeforge::agnostic
