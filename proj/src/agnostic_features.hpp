#pragma once

#include <span>
#include <vector>

#include "common.hpp"
#include "dataset_store.hpp"

namespace probeforge::agnostic {

// Multiple-choice: [p(1) >= p(2) >= p(3) >= p(4), H]. Short-form:
// [Avg(-log p), Max(-log p), Avg(H), Max(H)]. Natural log throughout.
using AgnosticVector = std::vector<double>;

AgnosticVector mc_features(std::span<const double> choice_logits);
AgnosticVector sf_features(std::span<const double> token_logprobs,
                           std::span<const double> token_entropies);

AgnosticVector sample_features(TaskType task, const dataset::SampleSignals& s);

// n x m matrix, row i = features of sample i.
Matrix<double> batch_features(const dataset::Bundle& bundle);

}  // namespace probeforge::agnostic
