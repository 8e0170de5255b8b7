#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsfuse/pipeline.hpp"
#include "zsfuse/textmatch.hpp"

namespace zsfuse {

struct ManifestRecord {
  std::string image;  // path, resolved against the manifest's directory when relative
  std::size_t label_index = 0;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> labels;
  std::optional<LabelTemplate> template_override;
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;

  std::filesystem::path resolve_image(std::size_t record_index) const;
};

/*
 * Manifest schema (JSON):
 *   {"name": "...", "labels": [...], "template_override"?: "pattern",
 *    "records": [{"image": "relative/or/absolute", "label_index": 0}, ...]}
 */
DatasetManifest load_manifest(const std::filesystem::path& path, bool strict_images = false);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes);

  void add(std::size_t true_index, std::size_t predicted_index);
  void set(std::size_t true_index, std::size_t predicted_index, std::uint64_t count);
  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t true_index, std::size_t predicted_index) const;
  std::uint64_t total() const { return total_; }
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t true_index) const;
  std::uint64_t col_sum(std::size_t predicted_index) const;

 private:
  std::size_t classes_ = 0;
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> counts_;  // row-major, rows = true class
};

// Indices of the k highest scores, ordered by (-score, index).
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

double top_k_accuracy(std::span<const std::vector<double>> score_vectors,
                      std::span<const std::size_t> true_indices, std::size_t k);

// kappa = (p_o - p_e) / (1 - p_e); the all-mass-on-one-diagonal-cell case is
// defined as 1.
double cohens_kappa(const ConfusionMatrix& confusion);

struct RecordOutcome {
  std::string image;
  std::size_t true_index = 0;
  bool failed = false;
  std::string error;
  std::size_t predicted_index = 0;
  std::vector<std::size_t> top5;
  std::vector<std::string> degraded;
};

struct EvaluationReport {
  std::string dataset;
  std::vector<std::string> labels;
  std::vector<RecordOutcome> records;
  std::size_t evaluated = 0;
  std::size_t failed = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double kappa = 0.0;
  ConfusionMatrix confusion;
  CounterSnapshot counters;  // delta over this run
  nlohmann::json config;

  nlohmann::json to_json() const;
  static EvaluationReport from_json(const nlohmann::json& j);
  std::string to_csv() const;  // RFC-4180, "\n" endings, summary footer rows
};

struct MethodConfig {
  enum class Method { Pipeline, Baseline };
  Method method = Method::Pipeline;
  FeatureSelection selection;
  FusionStrategy strategy = FusionStrategy::AverageFeature;
  MatchMetric baseline_metric;  // Baseline only
  bool degraded_mode = false;
  std::size_t parallelism = 8;
  double failure_fraction = 0.01;  // run fails if failed/records exceeds this
  nlohmann::json extra_config;     // CLI run-config snapshot, merged into the report
};

EvaluationReport evaluate(const DatasetManifest& manifest, const ClassifierModel* model,
                          const MethodConfig& config, EncoderBackend& encoder, LLMBackend& llm,
                          const CallCounters* counters = nullptr);

enum class ReportFormat { Json, Csv };
Bytes emit_report(const EvaluationReport& report, ReportFormat format);

}  // namespace zsfuse
