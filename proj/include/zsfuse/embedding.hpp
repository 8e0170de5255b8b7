#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "zsfuse/errors.hpp"

namespace zsfuse {

// Raw norms below this are treated as degenerate backend output.
inline constexpr double kZeroNormThreshold = 1e-12;
inline constexpr double kUnitNormTolerance = 1e-6;

/// Fixed-dimension real vector. Entries are validated finite on construction
/// and the unit-norm flag is derived from the actual Euclidean norm.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  bool unit_norm() const noexcept { return unit_norm_; }
  double norm() const;

 private:
  std::vector<double> values_;
  bool unit_norm_ = false;
};

/// Column-major n x m matrix of unit-norm class features; column i is the
/// encoded feature of class label i.
class ClassFeatureMatrix {
 public:
  explicit ClassFeatureMatrix(const std::vector<EmbeddingVector>& columns);
  ClassFeatureMatrix(std::size_t dim, std::vector<double> column_major);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t classes() const noexcept { return classes_; }
  std::span<const double> column(std::size_t i) const;
  EmbeddingVector column_vector(std::size_t i) const;
  std::span<const double> data() const noexcept { return data_; }

 private:
  void validate() const;

  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> data_;
};

/// Per-class similarity scores ("logits"); all entries finite.
class SimilarityScores {
 public:
  explicit SimilarityScores(std::vector<double> scores);

  std::size_t size() const noexcept { return scores_.size(); }
  double operator[](std::size_t i) const noexcept { return scores_[i]; }
  std::span<const double> values() const noexcept { return scores_; }

 private:
  std::vector<double> scores_;
};

// Accumulation runs in long double, the widest native precision here.
double vec_dot(std::span<const double> a, std::span<const double> b);
double vec_norm(std::span<const double> v);

EmbeddingVector normalize(const EmbeddingVector& v);
EmbeddingVector fuse_average(std::span<const EmbeddingVector> features);
SimilarityScores score(const EmbeddingVector& query, const ClassFeatureMatrix& matrix);
std::size_t argmax_index(const SimilarityScores& scores);
std::size_t argmax_index(std::span<const double> scores);

}  // namespace zsfuse
