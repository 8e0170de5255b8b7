#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "zsfuse/image.hpp"
#include "zsfuse/pipeline.hpp"

namespace zsfuse {

/// Occlusion kernel schedule for images: start at kernel x kernel pixels and
/// grow by `growth` whenever nothing exceeds the highlight threshold, up to
/// max_kernel. Defaults mirror the published 50/10/+50/200 schedule.
struct ImageMaskSchedule {
  int kernel = 50;
  int stride = 10;
  int growth = 50;
  int max_kernel = 200;

  void validate() const;
};

/// Word-window schedule for texts: start at start_width words, shrink by one
/// whenever nothing exceeds the threshold, down to min_width.
struct TextMaskSchedule {
  int start_width = 3;
  int min_width = 1;

  void validate() const;
};

struct AttributionOptions {
  ImageMaskSchedule image;
  TextMaskSchedule text;
  double highlight_threshold = 0.01;  // absolute baseline-score drop
};

struct ImageAttribution {
  std::vector<std::vector<double>> grid;  // rows x cols, importance per kernel position
  std::vector<std::vector<bool>> flipped;  // did the predicted class change
  int kernel_used = 0;
  int stride = 0;
  bool highlighted = false;
};

struct TextAttribution {
  std::vector<std::string> words;  // whitespace-split, original casing
  std::vector<double> importance;  // per word: max drop over covering windows
  std::vector<bool> flipped;
  int width_used = 0;
  bool highlighted = false;
};

struct AttributionMap {
  ImageAttribution image;
  TextAttribution description;
  TextAttribution prediction;
  std::size_t baseline_index = 0;
};

/// The unmasked reference run: full three-feature extraction at 224x224 plus
/// its average-feature scores. All masked rescorings reuse these texts and
/// features, re-encoding only the masked modality.
struct AttributionBaseline {
  QueryFeatures features;
  SimilarityScores scores;
  std::size_t baseline_index = 0;
  Image resized;

  AttributionBaseline(QueryFeatures f, SimilarityScores s, std::size_t index, Image img)
      : features(std::move(f)), scores(std::move(s)), baseline_index(index),
        resized(std::move(img)) {}
};

AttributionBaseline attribution_baseline(const Bytes& image, const ClassifierModel& model,
                                         EncoderBackend& encoder, LLMBackend& llm);

ImageAttribution attribute_image(const AttributionBaseline& baseline, const ClassifierModel& model,
                                 EncoderBackend& encoder, const ImageMaskSchedule& schedule,
                                 double highlight_threshold);

enum class TextRole { Description, Prediction };

TextAttribution attribute_text(const AttributionBaseline& baseline, TextRole role,
                               const ClassifierModel& model, EncoderBackend& encoder,
                               const TextMaskSchedule& schedule, double highlight_threshold);

AttributionMap attribute(const Bytes& image, const ClassifierModel& model,
                         EncoderBackend& encoder, LLMBackend& llm,
                         const AttributionOptions& options);

// PNG with importances alpha-blended as a red tint over their patch
// rectangles; an all-zero map re-encodes the image untouched.
Bytes render_heatmap(const AttributionMap& map, const Bytes& image);

nlohmann::json attribution_to_json(const AttributionMap& map);
AttributionMap attribution_from_json(const nlohmann::json& j);

}  // namespace zsfuse
