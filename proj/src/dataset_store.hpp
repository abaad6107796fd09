#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace probeforge::dataset {

inline constexpr int kFormatVersion = 1;

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kHiddenFile = "hidden_states.bin";
inline constexpr const char* kSignalsFile = "signals.jsonl";
inline constexpr const char* kLabelsFile = "labels.f32";

struct Manifest {
  int format_version = kFormatVersion;
  std::string dataset_name;
  std::string model_name;
  TaskType task_type = TaskType::kMultipleChoice;
  std::size_t n_samples = 0;
  std::size_t hidden_dim = 0;
  std::vector<int> layers;  // 0-indexed, strictly ascending
  LabelKind label_kind = LabelKind::kExactMatch;

  std::size_t agnostic_arity() const { return probeforge::agnostic_arity(task_type); }
  std::size_t row_width() const { return layers.size() * hidden_dim; }
  bool has_layer(int layer) const;
  // Column offset of a stored layer's block; throws listing stored layers.
  std::size_t layer_offset(int layer) const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// Raw output-distribution signals and answers for one sample. Multiple-choice
// samples carry the four A..D logits; short-form samples carry per-token
// log-probabilities (natural log) and per-position vocabulary entropies.
struct SampleSignals {
  std::string id;
  std::vector<double> choice_logits;
  std::vector<double> token_logprobs;
  std::vector<double> token_entropies;
  std::string answer;
  std::vector<std::string> gold;

  friend bool operator==(const SampleSignals&, const SampleSignals&) = default;
};

struct Bundle {
  Manifest manifest;
  Matrix<float> hidden;  // n_samples x (|layers| * hidden_dim), layer blocks in manifest order
  std::vector<SampleSignals> signals;
  std::optional<std::vector<double>> labels;
};

struct Split {
  std::vector<std::size_t> train_ids;  // ascending
  std::vector<std::size_t> test_ids;   // ascending
  std::uint64_t seed = 0;
  double train_fraction = 0.8;

  friend bool operator==(const Split&, const Split&) = default;
};

// Throws Error(kValidation) on the first violated invariant.
void validate_manifest(const Manifest& m);
void validate_signals(const Manifest& m, const SampleSignals& s, std::size_t index);
void validate_bundle(const Bundle& b);

Bundle load_bundle(const std::filesystem::path& dir);
void write_bundle(const Bundle& b, const std::filesystem::path& dir);

std::vector<double> read_labels(const std::filesystem::path& file, std::size_t n);
void write_labels(const std::filesystem::path& file, std::span<const double> labels);

Split make_split(std::size_t n_samples, std::uint64_t seed, double train_fraction);

Matrix<float> slice_layer(const Bundle& b, int layer);
// Gathers the given rows of one layer block.
Matrix<float> slice_layer(const Bundle& b, int layer, std::span<const std::size_t> rows);

}  // namespace probeforge::dataset
