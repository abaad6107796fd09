#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace probeforge {

enum class ErrorKind {
  kLoad,        // missing or unreadable file
  kCorrupt,     // file present but malformed / wrong size
  kValidation,  // data violates a documented invariant
  kArgument,    // caller passed an invalid parameter
  kMismatch,    // two inputs are incompatible (task type, width, ...)
  kIo,          // write failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

enum class TaskType { kMultipleChoice, kShortForm };
enum class LabelKind { kExactMatch, kRougeL };

std::string to_string(TaskType t);
std::string to_string(LabelKind k);
TaskType parse_task_type(const std::string& s);
LabelKind parse_label_kind(const std::string& s);

// Number of data-agnostic features for a task type.
constexpr std::size_t agnostic_arity(TaskType t) {
  return t == TaskType::kMultipleChoice ? 5 : 4;
}

// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw Error(ErrorKind::kArgument, "matrix data size does not match shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using FeatureMatrix = Matrix<float>;

}  // namespace probeforge
