#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zsfuse/backends.hpp"

namespace zsfuse {

struct TokenSequence {
  std::vector<std::string> tokens;
};

// Lowercase, split on any non-alphanumeric run, drop empties. Fixed
// project-wide and recorded in report provenance.
TokenSequence tokenize(std::string_view text);

// Clipped n-gram overlap F1: P over candidate n-grams, R over reference
// n-grams; 0 when either side has no n-grams.
double rouge_n_f1(const TokenSequence& candidate, const TokenSequence& reference, int n);

// Longest-common-subsequence F1 over tokens.
double rouge_l_f1(const TokenSequence& candidate, const TokenSequence& reference);

struct MatchMetric {
  enum class Kind { RougeN, RougeL, Embedding };
  Kind kind = Kind::RougeN;
  int n = 1;  // RougeN only

  std::string name() const;
  static MatchMetric parse(const std::string& name);  // rouge1|rouge2|...|rougeL|embed
};

struct MatchResult {
  std::size_t class_index = 0;
  double score = 0.0;
  MatchMetric metric;
};

// Per-label scores of the raw LLM prediction text under the metric.
std::vector<double> match_scores(std::string_view prediction_text,
                                 std::span<const std::string> labels, const MatchMetric& metric,
                                 EncoderBackend* encoder);

// Argmax over match_scores with lowest-index tie-break.
MatchResult match_prediction(std::string_view prediction_text,
                             std::span<const std::string> labels, const MatchMetric& metric,
                             EncoderBackend* encoder = nullptr);

}  // namespace zsfuse
