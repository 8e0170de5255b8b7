#include "zsfuse/textmatch.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace zsfuse {

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      out.tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) {
    out.tokens.push_back(std::move(current));
  }
  return out;
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const TokenSequence& seq, int n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (static_cast<std::size_t>(n) > seq.tokens.size()) {
    return counts;
  }
  for (std::size_t i = 0; i + n <= seq.tokens.size(); ++i) {
    counts[std::vector<std::string>(seq.tokens.begin() + i, seq.tokens.begin() + i + n)] += 1;
  }
  return counts;
}

double f1(double matches, double candidate_total, double reference_total) {
  if (candidate_total <= 0.0 || reference_total <= 0.0) {
    return 0.0;
  }
  const double p = matches / candidate_total;
  const double r = matches / reference_total;
  if (p + r == 0.0) {
    return 0.0;
  }
  return 2.0 * p * r / (p + r);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) {
    return 0;
  }
  // Two-row DP over the classic LCS table.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double rouge_n_f1(const TokenSequence& candidate, const TokenSequence& reference, int n) {
  if (n < 1) {
    raise(Errc::InvalidArgument, "rouge n must be >= 1");
  }
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t cand_total = 0, ref_total = 0, matches = 0;
  for (const auto& [gram, count] : cand) {
    cand_total += count;
    const auto it = ref.find(gram);
    if (it != ref.end()) {
      matches += std::min(count, it->second);  // clipped counts
    }
  }
  for (const auto& kv : ref) {
    ref_total += kv.second;
  }
  return f1(static_cast<double>(matches), static_cast<double>(cand_total),
            static_cast<double>(ref_total));
}

double rouge_l_f1(const TokenSequence& candidate, const TokenSequence& reference) {
  const std::size_t lcs = lcs_length(candidate.tokens, reference.tokens);
  return f1(static_cast<double>(lcs), static_cast<double>(candidate.tokens.size()),
            static_cast<double>(reference.tokens.size()));
}

std::string MatchMetric::name() const {
  switch (kind) {
    case Kind::RougeN: return "rouge" + std::to_string(n);
    case Kind::RougeL: return "rougeL";
    case Kind::Embedding: return "embed";
  }
  return "rouge1";
}

MatchMetric MatchMetric::parse(const std::string& name) {
  if (name == "rougeL") return {Kind::RougeL, 1};
  if (name == "embed") return {Kind::Embedding, 1};
  if (name.rfind("rouge", 0) == 0 && name.size() > 5) {
    try {
      const int n = std::stoi(name.substr(5));
      if (n >= 1) return {Kind::RougeN, n};
    } catch (const std::exception&) {
    }
  }
  raise(Errc::InvalidArgument, "unknown match metric: " + name);
}

std::vector<double> match_scores(std::string_view prediction_text,
                                 std::span<const std::string> labels, const MatchMetric& metric,
                                 EncoderBackend* encoder) {
  if (labels.empty()) {
    raise(Errc::EmptyLabelSet, "matching needs at least one label");
  }
  std::vector<double> scores(labels.size(), 0.0);
  if (metric.kind == MatchMetric::Kind::Embedding) {
    if (encoder == nullptr) {
      raise(Errc::InvalidArgument, "embedding match metric needs an encoder backend");
    }
    const EmbeddingVector pred = normalize(encoder->encode_text(prediction_text));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const EmbeddingVector lab = normalize(encoder->encode_text(labels[i]));
      scores[i] = vec_dot(pred.values(), lab.values());
    }
    return scores;
  }
  const TokenSequence pred = tokenize(prediction_text);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const TokenSequence lab = tokenize(labels[i]);
    scores[i] = metric.kind == MatchMetric::Kind::RougeN ? rouge_n_f1(pred, lab, metric.n)
                                                         : rouge_l_f1(pred, lab);
  }
  return scores;
}

MatchResult match_prediction(std::string_view prediction_text,
                             std::span<const std::string> labels, const MatchMetric& metric,
                             EncoderBackend* encoder) {
  const auto scores = match_scores(prediction_text, labels, metric, encoder);
  const std::size_t best = argmax_index(scores);
  return MatchResult{best, scores[best], metric};
}

}  // namespace zsfuse
