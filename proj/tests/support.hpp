#pragma once
// Small builders shared by the unit tests.

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "dataset_store.hpp"
#include "random.hpp"

namespace testing_support {

// Fresh empty directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("probeforge_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Random multiple-choice bundle; hidden values N(0,1), answers right about half the time.
inline probeforge::dataset::Bundle mc_bundle(std::size_t n, std::size_t dim, std::vector<int> layers,
                                             std::uint64_t seed, const std::string& name = "toy") {
  using namespace probeforge;
  rng::Rng gen(seed);
  dataset::Bundle b;
  b.manifest.dataset_name = name;
  b.manifest.model_name = "test";
  b.manifest.task_type = TaskType::kMultipleChoice;
  b.manifest.label_kind = LabelKind::kExactMatch;
  b.manifest.n_samples = n;
  b.manifest.hidden_dim = dim;
  b.manifest.layers = std::move(layers);
  b.hidden = Matrix<float>(n, b.manifest.row_width());
  for (auto& v : b.hidden.data()) v = static_cast<float>(gen.normal());
  for (std::size_t i = 0; i < n; ++i) {
    dataset::SampleSignals s;
    s.id = name + "_" + std::to_string(i);
    s.choice_logits = {gen.normal(), gen.normal(), gen.normal(), gen.normal()};
    const char gold = static_cast<char>('A' + gen.below(4));
    s.gold = {std::string(1, gold)};
    s.answer = gen.uniform() < 0.5 ? std::string(1, gold) : std::string(1, gold == 'A' ? 'B' : 'A');
    b.signals.push_back(std::move(s));
  }
  return b;
}

inline probeforge::dataset::Bundle sf_bundle(std::size_t n, std::size_t dim, std::vector<int> layers,
                                             std::uint64_t seed, const std::string& name = "toysf") {
  using namespace probeforge;
  rng::Rng gen(seed);
  dataset::Bundle b;
  b.manifest.dataset_name = name;
  b.manifest.model_name = "test";
  b.manifest.task_type = TaskType::kShortForm;
  b.manifest.label_kind = LabelKind::kRougeL;
  b.manifest.n_samples = n;
  b.manifest.hidden_dim = dim;
  b.manifest.layers = std::move(layers);
  b.hidden = Matrix<float>(n, b.manifest.row_width());
  for (auto& v : b.hidden.data()) v = static_cast<float>(gen.normal());
  for (std::size_t i = 0; i < n; ++i) {
    dataset::SampleSignals s;
    s.id = name + "_" + std::to_string(i);
    const std::size_t len = 1 + gen.below(4);
    for (std::size_t k = 0; k < len; ++k) {
      s.token_logprobs.push_back(-gen.exponential(1.0));
      s.token_entropies.push_back(gen.exponential(1.0));
    }
    s.gold = {"the quick fox"};
    s.answer = gen.uniform() < 0.5 ? "the quick fox" : "a slow dog";
    b.signals.push_back(std::move(s));
  }
  return b;
}

}  // namespace testing_support
