#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "dataset_store.hpp"

namespace probeforge::labeling {

struct LabelVector {
  std::vector<double> values;
  LabelKind kind = LabelKind::kExactMatch;
};

// First standalone A-D letter after upper-casing, or '\0' if none.
char normalize_choice(std::string_view text);

// 1 iff both sides normalize to the same choice letter.
int exact_match_label(std::string_view answer, std::string_view gold);

// Lower-case, non-alphanumerics become spaces, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// Rouge-L F1 over tokens; 0 when either side is empty.
double rouge_l(std::string_view candidate, std::string_view reference);

LabelVector label_bundle(const dataset::Bundle& bundle);

// 1 iff value >= threshold.
std::vector<int> binarize(std::span<const double> labels, double threshold);

}  // namespace probeforge::labeling
