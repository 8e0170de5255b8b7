#include "zsfuse/embedding.hpp"

#include <cmath>
#include <string>

namespace zsfuse {

namespace {

void check_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      raise(Errc::InvalidArgument, "non-finite vector entry");
    }
  }
}

}  // namespace

double vec_dot(std::span<const double> a, std::span<const double> b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
  }
  return static_cast<double>(acc);
}

double vec_norm(std::span<const double> v) {
  long double acc = 0.0L;
  for (double x : v) {
    acc += static_cast<long double>(x) * static_cast<long double>(x);
  }
  return static_cast<double>(std::sqrt(acc));
}

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) {
    raise(Errc::InvalidArgument, "embedding dim must be >= 1");
  }
  check_finite(values_);
  unit_norm_ = std::abs(vec_norm(values_) - 1.0) <= kUnitNormTolerance;
}

double EmbeddingVector::norm() const { return vec_norm(values_); }

ClassFeatureMatrix::ClassFeatureMatrix(const std::vector<EmbeddingVector>& columns) {
  if (columns.empty()) {
    raise(Errc::InvalidArgument, "class feature matrix needs at least one column");
  }
  dim_ = columns.front().dim();
  classes_ = columns.size();
  data_.reserve(dim_ * classes_);
  for (const auto& col : columns) {
    if (col.dim() != dim_) {
      raise(Errc::DimMismatch, "matrix columns must share one dim");
    }
    data_.insert(data_.end(), col.values().begin(), col.values().end());
  }
  validate();
}

ClassFeatureMatrix::ClassFeatureMatrix(std::size_t dim, std::vector<double> column_major)
    : dim_(dim), data_(std::move(column_major)) {
  if (dim_ == 0 || data_.empty() || data_.size() % dim_ != 0) {
    raise(Errc::InvalidArgument, "column-major data size must be a positive multiple of dim");
  }
  classes_ = data_.size() / dim_;
  validate();
}

void ClassFeatureMatrix::validate() const {
  check_finite(data_);
  for (std::size_t i = 0; i < classes_; ++i) {
    const double n = vec_norm(column(i));
    if (std::abs(n - 1.0) > kUnitNormTolerance) {
      raise(Errc::InvalidArgument,
            "matrix column " + std::to_string(i) + " is not unit-norm (norm=" +
                std::to_string(n) + ")");
    }
  }
}

std::span<const double> ClassFeatureMatrix::column(std::size_t i) const {
  return std::span<const double>(data_).subspan(i * dim_, dim_);
}

EmbeddingVector ClassFeatureMatrix::column_vector(std::size_t i) const {
  const auto col = column(i);
  return EmbeddingVector(std::vector<double>(col.begin(), col.end()));
}

SimilarityScores::SimilarityScores(std::vector<double> scores) : scores_(std::move(scores)) {
  check_finite(scores_);
}

EmbeddingVector normalize(const EmbeddingVector& v) {
  const double n = v.norm();
  if (n < kZeroNormThreshold) {
    raise(Errc::ZeroVector, "cannot normalize a (near) zero vector");
  }
  std::vector<double> out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) {
    out[i] = v[i] / n;
  }
  return EmbeddingVector(std::move(out));
}

EmbeddingVector fuse_average(std::span<const EmbeddingVector> features) {
  if (features.empty()) {
    raise(Errc::InvalidArgument, "fuse_average needs at least one feature");
  }
  const std::size_t dim = features.front().dim();
  for (const auto& f : features) {
    if (f.dim() != dim) {
      raise(Errc::DimMismatch, "fused features must share one dim");
    }
    if (!f.unit_norm()) {
      raise(Errc::InvalidArgument, "fuse_average inputs must be unit-norm");
    }
  }
  // Sum then normalize; the normalization makes sum and mean equivalent.
  std::vector<double> sum(dim, 0.0);
  for (const auto& f : features) {
    for (std::size_t i = 0; i < dim; ++i) {
      sum[i] += f[i];
    }
  }
  return normalize(EmbeddingVector(std::move(sum)));
}

SimilarityScores score(const EmbeddingVector& query, const ClassFeatureMatrix& matrix) {
  if (query.dim() != matrix.dim()) {
    raise(Errc::DimMismatch, "query dim does not match matrix dim");
  }
  if (!query.unit_norm()) {
    raise(Errc::InvalidArgument, "query must be unit-norm");
  }
  std::vector<double> scores(matrix.classes());
  for (std::size_t i = 0; i < matrix.classes(); ++i) {
    scores[i] = vec_dot(query.values(), matrix.column(i));
  }
  return SimilarityScores(std::move(scores));
}

std::size_t argmax_index(std::span<const double> scores) {
  if (scores.empty()) {
    raise(Errc::EmptyScores, "argmax over empty scores");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    // Ties break to the lowest index.
    if (scores[i] > scores[best]) {
      best = i;
    }
  }
  return best;
}

std::size_t argmax_index(const SimilarityScores& scores) { return argmax_index(scores.values()); }

}  // namespace zsfuse
