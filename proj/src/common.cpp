#include "common.hpp"

namespace probeforge {

std::string to_string(TaskType t) {
  return t == TaskType::kMultipleChoice ? "multiple_choice" : "short_form";
}

std::string to_string(LabelKind k) {
  return k == LabelKind::kExactMatch ? "exact_match" : "rouge_l";
}

TaskType parse_task_type(const std::string& s) {
  if (s == "multiple_choice") return TaskType::kMultipleChoice;
  if (s == "short_form") return TaskType::kShortForm;
  throw Error(ErrorKind::kValidation, "unknown task_type '" + s + "'");
}

LabelKind parse_label_kind(const std::string& s) {
  if (s == "exact_match") return LabelKind::kExactMatch;
  if (s == "rouge_l") return LabelKind::kRougeL;
  throw Error(ErrorKind::kValidation, "unknown label_kind '" + s + "'");
}

}  // namespace probeforge
