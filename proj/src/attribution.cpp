#include "zsfuse/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "zsfuse/prompts.hpp"

namespace zsfuse {

namespace {

using nlohmann::json;

// Mask fill: mid-gray, the conventional occlusion neutral.
constexpr std::uint8_t kMaskFill = 128;

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    words.push_back(w);
  }
  return words;
}

std::string join_without_window(const std::vector<std::string>& words, std::size_t start,
                                std::size_t end) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i >= start && i < end) continue;
    if (!out.empty()) out += " ";
    out += words[i];
  }
  return out;
}

// Rescore with one feature swapped out; a null slot drops that feature.
SimilarityScores rescore(const ClassifierModel& model, const EmbeddingVector* image_feature,
                         const EmbeddingVector* description_feature,
                         const EmbeddingVector* prediction_feature) {
  std::vector<const EmbeddingVector*> features;
  if (image_feature != nullptr) features.push_back(image_feature);
  if (description_feature != nullptr) features.push_back(description_feature);
  if (prediction_feature != nullptr) features.push_back(prediction_feature);
  if (features.empty()) {
    raise(Errc::NoFeaturesAvailable, "masking removed every feature");
  }
  return fuse_and_score(features, model.matrix(), FusionStrategy::AverageFeature);
}

}  // namespace

void ImageMaskSchedule::validate() const {
  if (kernel <= 0 || kernel > max_kernel || stride < 1 || growth < 1) {
    raise(Errc::InvalidArgument, "image mask schedule needs 0 < kernel <= max_kernel, "
                                 "stride >= 1, growth >= 1");
  }
}

void TextMaskSchedule::validate() const {
  if (min_width < 1 || start_width < min_width) {
    raise(Errc::InvalidArgument, "text mask schedule needs start_width >= min_width >= 1");
  }
}

AttributionBaseline attribution_baseline(const Bytes& image, const ClassifierModel& model,
                                         EncoderBackend& encoder, LLMBackend& llm) {
  FeatureSelection all;  // attribution always runs on the full three features
  QueryFeatures features = extract_features(image, model, all, encoder, llm);
  SimilarityScores scores =
      fuse_and_score(features.present(), model.matrix(), FusionStrategy::AverageFeature);
  const std::size_t index = argmax_index(scores);
  Image resized = resize_bilinear(decode_image(image), kInputImageSide, kInputImageSide);
  return AttributionBaseline(std::move(features), std::move(scores), index, std::move(resized));
}

ImageAttribution attribute_image(const AttributionBaseline& baseline, const ClassifierModel& model,
                                 EncoderBackend& encoder, const ImageMaskSchedule& schedule,
                                 double highlight_threshold) {
  schedule.validate();
  const Image& img = baseline.resized;
  if (schedule.kernel > img.width || schedule.kernel > img.height) {
    raise(Errc::DegenerateImage, "image smaller than the starting kernel");
  }
  const double baseline_score = baseline.scores[baseline.baseline_index];
  const EmbeddingVector* df =
      baseline.features.description_feature ? &*baseline.features.description_feature : nullptr;
  const EmbeddingVector* pf =
      baseline.features.prediction_feature ? &*baseline.features.prediction_feature : nullptr;

  ImageAttribution out;
  out.stride = schedule.stride;
  for (int kernel = schedule.kernel;; kernel += schedule.growth) {
    kernel = std::min(kernel, schedule.max_kernel);
    out.kernel_used = kernel;
    out.grid.clear();
    out.flipped.clear();
    out.highlighted = false;

    for (int y = 0; y < img.height; y += schedule.stride) {
      std::vector<double> row;
      std::vector<bool> flipped_row;
      for (int x = 0; x < img.width; x += schedule.stride) {
        Image masked = img;
        // Patch clipped to image bounds; corners behave like the interior.
        fill_rect(masked, x, y, x + kernel, y + kernel, kMaskFill, kMaskFill, kMaskFill);
        const EmbeddingVector masked_if = normalize(encoder.encode_image(encode_png(masked)));
        const SimilarityScores scores = rescore(model, &masked_if, df, pf);
        const double drop = baseline_score - scores[baseline.baseline_index];
        row.push_back(drop);
        flipped_row.push_back(argmax_index(scores) != baseline.baseline_index);
        if (drop > highlight_threshold) {
          out.highlighted = true;
        }
      }
      out.grid.push_back(std::move(row));
      out.flipped.push_back(std::move(flipped_row));
    }
    if (out.highlighted || kernel >= schedule.max_kernel) {
      return out;
    }
  }
}

TextAttribution attribute_text(const AttributionBaseline& baseline, TextRole role,
                               const ClassifierModel& model, EncoderBackend& encoder,
                               const TextMaskSchedule& schedule, double highlight_threshold) {
  schedule.validate();
  const bool is_description = role == TextRole::Description;
  const auto& text =
      is_description ? baseline.features.description_text : baseline.features.prediction_text;
  if (!text) {
    raise(Errc::InvalidArgument, "baseline run has no text for this role");
  }
  const double baseline_score = baseline.scores[baseline.baseline_index];
  const EmbeddingVector* image_f =
      baseline.features.image_feature ? &*baseline.features.image_feature : nullptr;
  const EmbeddingVector* df =
      baseline.features.description_feature ? &*baseline.features.description_feature : nullptr;
  const EmbeddingVector* pf =
      baseline.features.prediction_feature ? &*baseline.features.prediction_feature : nullptr;

  TextAttribution out;
  out.words = split_words(*text);
  if (out.words.empty()) {
    out.width_used = schedule.min_width;
    return out;  // zero tokens: empty importance list, no error
  }

  for (int width = schedule.start_width;; --width) {
    width = std::max(width, schedule.min_width);
    out.width_used = width;
    out.importance.assign(out.words.size(), 0.0);
    out.flipped.assign(out.words.size(), false);
    out.highlighted = false;

    // Slide with stride one word; windows past the tail clamp to the text.
    const std::size_t positions =
        out.words.size() > static_cast<std::size_t>(width) ? out.words.size() - width + 1 : 1;
    for (std::size_t start = 0; start < positions; ++start) {
      const std::size_t end = std::min(out.words.size(), start + width);
      const std::string remaining = join_without_window(out.words, start, end);
      // Empty remainder means the whole modality is masked out: score the
      // other two features alone.
      std::optional<EmbeddingVector> masked_feature;
      if (!remaining.empty()) {
        masked_feature = normalize(encoder.encode_text(remaining));
      }
      const EmbeddingVector* masked_ptr = masked_feature ? &*masked_feature : nullptr;
      const SimilarityScores scores = is_description
                                          ? rescore(model, image_f, masked_ptr, pf)
                                          : rescore(model, image_f, df, masked_ptr);
      const double drop = baseline_score - scores[baseline.baseline_index];
      const bool flip = argmax_index(scores) != baseline.baseline_index;
      for (std::size_t w = start; w < end; ++w) {
        out.importance[w] = std::max(out.importance[w], drop);
        if (flip) out.flipped[w] = true;
      }
      if (drop > highlight_threshold) {
        out.highlighted = true;
      }
    }
    if (out.highlighted || width <= schedule.min_width) {
      return out;
    }
  }
}

AttributionMap attribute(const Bytes& image, const ClassifierModel& model,
                         EncoderBackend& encoder, LLMBackend& llm,
                         const AttributionOptions& options) {
  const AttributionBaseline baseline = attribution_baseline(image, model, encoder, llm);
  AttributionMap map;
  map.baseline_index = baseline.baseline_index;
  map.image = attribute_image(baseline, model, encoder, options.image,
                              options.highlight_threshold);
  map.description = attribute_text(baseline, TextRole::Description, model, encoder, options.text,
                                   options.highlight_threshold);
  map.prediction = attribute_text(baseline, TextRole::Prediction, model, encoder, options.text,
                                  options.highlight_threshold);
  return map;
}

Bytes render_heatmap(const AttributionMap& map, const Bytes& image) {
  Image img = resize_bilinear(decode_image(image), kInputImageSide, kInputImageSide);
  double max_importance = 0.0;
  for (const auto& row : map.image.grid) {
    for (double v : row) {
      max_importance = std::max(max_importance, v);
    }
  }
  if (max_importance > 0.0) {
    // Per-pixel importance is the max over covering patches, so overlapping
    // positions do not double-tint.
    std::vector<double> pixel_importance(static_cast<std::size_t>(img.width) * img.height, 0.0);
    const int stride = map.image.stride > 0 ? map.image.stride : 1;
    const int kernel = map.image.kernel_used;
    for (std::size_t gy = 0; gy < map.image.grid.size(); ++gy) {
      for (std::size_t gx = 0; gx < map.image.grid[gy].size(); ++gx) {
        const double v = map.image.grid[gy][gx];
        if (v <= 0.0) continue;
        const int y0 = static_cast<int>(gy) * stride;
        const int x0 = static_cast<int>(gx) * stride;
        for (int y = y0; y < std::min(img.height, y0 + kernel); ++y) {
          for (int x = x0; x < std::min(img.width, x0 + kernel); ++x) {
            auto& cell = pixel_importance[static_cast<std::size_t>(y) * img.width + x];
            cell = std::max(cell, v);
          }
        }
      }
    }
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const double v = pixel_importance[static_cast<std::size_t>(y) * img.width + x];
        if (v <= 0.0) continue;
        const double alpha = 0.5 * (v / max_importance);
        std::uint8_t* p = img.pixel(x, y);
        p[0] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * p[0] + alpha * 255.0));
        p[1] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * p[1]));
        p[2] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * p[2]));
      }
    }
  }
  return encode_png(img);
}

namespace {

json text_to_json(const TextAttribution& t) {
  return json{{"words", t.words},
              {"importance", t.importance},
              {"flipped", std::vector<int>(t.flipped.begin(), t.flipped.end())},
              {"width_used", t.width_used},
              {"highlighted", t.highlighted}};
}

TextAttribution text_from_json(const json& j) {
  TextAttribution t;
  t.words = j.value("words", std::vector<std::string>{});
  t.importance = j.value("importance", std::vector<double>{});
  for (int f : j.value("flipped", std::vector<int>{})) {
    t.flipped.push_back(f != 0);
  }
  t.width_used = j.value("width_used", 1);
  t.highlighted = j.value("highlighted", false);
  return t;
}

}  // namespace

json attribution_to_json(const AttributionMap& map) {
  json flipped = json::array();
  for (const auto& row : map.image.flipped) {
    flipped.push_back(std::vector<int>(row.begin(), row.end()));
  }
  return json{
      {"grid", map.image.grid},
      {"grid_flipped", flipped},
      {"kernel_used", map.image.kernel_used},
      {"stride", map.image.stride},
      {"image_highlighted", map.image.highlighted},
      {"tokens",
       {{"description", map.description.importance}, {"prediction", map.prediction.importance}}},
      {"texts", {{"description", text_to_json(map.description)},
                 {"prediction", text_to_json(map.prediction)}}},
      {"baseline_index", map.baseline_index},
  };
}

AttributionMap attribution_from_json(const json& j) {
  AttributionMap map;
  map.baseline_index = j.value("baseline_index", 0u);
  map.image.grid = j.value("grid", std::vector<std::vector<double>>{});
  for (const auto& row : j.value("grid_flipped", std::vector<std::vector<int>>{})) {
    std::vector<bool> b(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) b[i] = row[i] != 0;
    map.image.flipped.push_back(std::move(b));
  }
  map.image.kernel_used = j.value("kernel_used", 0);
  map.image.stride = j.value("stride", 0);
  map.image.highlighted = j.value("image_highlighted", false);
  map.description = text_from_json(j.at("texts").at("description"));
  map.prediction = text_from_json(j.at("texts").at("prediction"));
  return map;
}

}  // namespace zsfuse
