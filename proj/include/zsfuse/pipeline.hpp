#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zsfuse/backends.hpp"
#include "zsfuse/classifier.hpp"
#include "zsfuse/embedding.hpp"

namespace zsfuse {

inline constexpr int kInputImageSide = 224;  // every image is resized to 224x224

/// Which of the three input features participate (Table-2 style ablations).
struct FeatureSelection {
  bool use_image = true;
  bool use_description = true;
  bool use_prediction = true;

  void validate() const;  // at least one flag set
  std::string name() const;                        // e.g. "if,df,pf"
  static FeatureSelection parse(const std::string& spec);  // comma list of if|df|pf
};

enum class FusionStrategy { AverageFeature, AverageSimilarity, MaxSimilarity };

std::string fusion_strategy_name(FusionStrategy s);
FusionStrategy fusion_strategy_from_name(const std::string& name);

struct QueryFeatures {
  std::optional<EmbeddingVector> image_feature;
  std::optional<EmbeddingVector> description_feature;
  std::optional<EmbeddingVector> prediction_feature;
  std::optional<std::string> description_text;
  std::optional<std::string> prediction_text;

  std::vector<const EmbeddingVector*> present() const;
};

struct Prediction {
  std::size_t class_index = 0;
  std::string class_label;
  SimilarityScores scores;
  QueryFeatures features;
  std::vector<std::string> degraded;  // names of selected features that failed and were skipped
};

struct PipelineOptions {
  FeatureSelection selection;
  FusionStrategy strategy = FusionStrategy::AverageFeature;
  bool degraded_mode = false;  // skip failed optional features instead of failing the image
};

// Resize to 224x224, then gather the selected features: the encoded image,
// the encoded LLM image description, and the encoded LLM initial class
// prediction. Inference-time LLM calls run at temperature 0.
QueryFeatures extract_features(const Bytes& image, const ClassifierModel& model,
                               const FeatureSelection& selection, EncoderBackend& encoder,
                               LLMBackend& llm, bool degraded_mode = false,
                               std::vector<std::string>* degraded_out = nullptr);

Prediction classify(const Bytes& image, const ClassifierModel& model,
                    const PipelineOptions& options, EncoderBackend& encoder, LLMBackend& llm);

// Scores a set of already-extracted features under a fusion strategy;
// exposed so rescoring loops (attribution) can reuse it.
SimilarityScores fuse_and_score(const std::vector<const EmbeddingVector*>& features,
                                const ClassFeatureMatrix& matrix, FusionStrategy strategy);

struct BatchEntry {
  std::size_t index = 0;
  std::optional<Prediction> prediction;
  std::optional<Errc> error_code;
  std::string error;
};

// One entry per image path, in input order; per-image failures become typed
// entries instead of aborting the batch.
std::vector<BatchEntry> classify_batch(const std::vector<std::string>& image_paths,
                                       const ClassifierModel& model,
                                       const PipelineOptions& options, EncoderBackend& encoder,
                                       LLMBackend& llm, std::size_t parallelism = 8);

}  // namespace zsfuse
