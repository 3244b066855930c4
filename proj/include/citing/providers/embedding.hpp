#pragma once

#include <span>
#include <string>
#include <vector>

namespace citing {

/// Fixed-dimension, finite embedding. Vectors produced by a provider are never all-zero.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Throws DataError on empty, non-finite, or (when `reject_zero`) all-zero input.
  explicit EmbeddingVector(std::vector<double> values, bool reject_zero = true);

  std::size_t dimension() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

/// One upstream attempt over a batch. Output is aligned with `texts`.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string id() const = 0;
  virtual std::vector<std::vector<double>> embed(const std::string& model,
                                                 std::span<const std::string> texts) = 0;
};

}  // namespace citing
