#include "labeling.hpp"

#include <algorithm>
#include <cctype>

namespace probeforge::labeling {
namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

char normalize_choice(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    if (c < 'A' || c > 'D') continue;
    const bool left_ok = i == 0 || !is_alnum(text[i - 1]);
    const bool right_ok = i + 1 == text.size() || !is_alnum(text[i + 1]);
    if (left_ok && right_ok) return c;
  }
  return '\0';
}

int exact_match_label(std::string_view answer, std::string_view gold) {
  const char a = normalize_choice(answer);
  return a != '\0' && a == normalize_choice(gold) ? 1 : 0;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (is_alnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(cand, ref));
  if (lcs == 0.0) return 0.0;
  const double precision = lcs / static_cast<double>(cand.size());
  const double recall = lcs / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

LabelVector label_bundle(const dataset::Bundle& bundle) {
  LabelVector out;
  out.kind = bundle.manifest.label_kind;
  out.values.reserve(bundle.signals.size());
  const bool mc = bundle.manifest.task_type == TaskType::kMultipleChoice;
  for (const auto& s : bundle.signals) {
    if (s.gold.empty())
      throw Error(ErrorKind::kValidation, "sample '" + s.id + "' has an empty gold list");
    if (mc) {
      out.values.push_back(exact_match_label(s.answer, s.gold.front()));
    } else {
      double best = 0.0;
      for (const auto& g : s.gold) best = std::max(best, rouge_l(s.answer, g));
      out.values.push_back(best);
    }
  }
  return out;
}

std::vector<int> binarize(std::span<const double> labels, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error(ErrorKind::kArgument, "threshold must lie in (0,1)");
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] >= threshold ? 1 : 0;
  return out;
}

}  // namespace probeforge::labeling
