#include "zsfuse/pipeline.hpp"

#include <algorithm>

#include "zsfuse/image.hpp"
#include "zsfuse/parallel.hpp"
#include "zsfuse/prompts.hpp"

namespace zsfuse {

void FeatureSelection::validate() const {
  if (!use_image && !use_description && !use_prediction) {
    raise(Errc::InvalidArgument, "feature selection must enable at least one feature");
  }
}

std::string FeatureSelection::name() const {
  std::string out;
  auto add = [&](const char* tag) {
    if (!out.empty()) out += ",";
    out += tag;
  };
  if (use_image) add("if");
  if (use_description) add("df");
  if (use_prediction) add("pf");
  return out;
}

FeatureSelection FeatureSelection::parse(const std::string& spec) {
  FeatureSelection sel{false, false, false};
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string tok =
        spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (tok == "if") {
      sel.use_image = true;
    } else if (tok == "df") {
      sel.use_description = true;
    } else if (tok == "pf") {
      sel.use_prediction = true;
    } else if (!tok.empty()) {
      raise(Errc::InvalidArgument, "unknown feature tag '" + tok + "' (expected if, df, pf)");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  sel.validate();
  return sel;
}

std::string fusion_strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::AverageFeature: return "avg-feature";
    case FusionStrategy::AverageSimilarity: return "avg-similarity";
    case FusionStrategy::MaxSimilarity: return "max-similarity";
  }
  return "avg-feature";
}

FusionStrategy fusion_strategy_from_name(const std::string& name) {
  if (name == "avg-feature") return FusionStrategy::AverageFeature;
  if (name == "avg-similarity") return FusionStrategy::AverageSimilarity;
  if (name == "max-similarity") return FusionStrategy::MaxSimilarity;
  raise(Errc::InvalidArgument, "unknown fusion strategy: " + name);
}

std::vector<const EmbeddingVector*> QueryFeatures::present() const {
  std::vector<const EmbeddingVector*> out;
  if (image_feature) out.push_back(&*image_feature);
  if (description_feature) out.push_back(&*description_feature);
  if (prediction_feature) out.push_back(&*prediction_feature);
  return out;
}

QueryFeatures extract_features(const Bytes& image, const ClassifierModel& model,
                               const FeatureSelection& selection, EncoderBackend& encoder,
                               LLMBackend& llm, bool degraded_mode,
                               std::vector<std::string>* degraded_out) {
  selection.validate();
  const Image decoded = decode_image(image);
  const Bytes resized =
      encode_png(resize_bilinear(decoded, kInputImageSide, kInputImageSide));

  QueryFeatures out;
  std::vector<std::string> degraded;
  std::optional<Error> first_failure;

  auto attempt = [&](const char* feature_name, auto&& compute) {
    try {
      compute();
    } catch (const Error& e) {
      if (!degraded_mode) {
        throw;
      }
      degraded.push_back(feature_name);
      if (!first_failure) first_failure = e;
    }
  };

  if (selection.use_image) {
    attempt("image", [&] { out.image_feature = normalize(encoder.encode_image(resized)); });
  }
  if (selection.use_description) {
    attempt("description", [&] {
      const std::string text = llm.generate(description_prompt_body(), resized, 0.0);
      out.description_text = text;
      out.description_feature = normalize(encoder.encode_text(text));
    });
  }
  if (selection.use_prediction) {
    attempt("prediction", [&] {
      const std::string prompt = render_classification_prompt(model.labels());
      const std::string text = llm.generate(prompt, resized, 0.0);
      out.prediction_text = text;
      out.prediction_feature = normalize(encoder.encode_text(text));
    });
  }

  if (out.present().empty()) {
    raise(Errc::NoFeaturesAvailable,
          "every selected feature failed" +
              (first_failure ? std::string(" (first: ") + first_failure->what() + ")" : ""));
  }
  if (degraded_out != nullptr) {
    *degraded_out = degraded;
  }
  return out;
}

SimilarityScores fuse_and_score(const std::vector<const EmbeddingVector*>& features,
                                const ClassFeatureMatrix& matrix, FusionStrategy strategy) {
  if (features.empty()) {
    raise(Errc::NoFeaturesAvailable, "no features to score");
  }
  if (strategy == FusionStrategy::AverageFeature) {
    std::vector<EmbeddingVector> owned;
    owned.reserve(features.size());
    for (const auto* f : features) owned.push_back(*f);
    return score(fuse_average(owned), matrix);
  }
  std::vector<std::vector<double>> per_feature;
  per_feature.reserve(features.size());
  for (const auto* f : features) {
    const auto s = score(*f, matrix);
    per_feature.emplace_back(s.values().begin(), s.values().end());
  }
  std::vector<double> fused(matrix.classes());
  for (std::size_t c = 0; c < matrix.classes(); ++c) {
    if (strategy == FusionStrategy::AverageSimilarity) {
      long double acc = 0.0L;
      for (const auto& s : per_feature) acc += s[c];
      fused[c] = static_cast<double>(acc / static_cast<long double>(per_feature.size()));
    } else {
      double best = per_feature.front()[c];
      for (const auto& s : per_feature) best = std::max(best, s[c]);
      fused[c] = best;
    }
  }
  return SimilarityScores(std::move(fused));
}

Prediction classify(const Bytes& image, const ClassifierModel& model,
                    const PipelineOptions& options, EncoderBackend& encoder, LLMBackend& llm) {
  const std::size_t backend_dim = encoder.dim();
  if (backend_dim != 0 && backend_dim != model.dim()) {
    raise(Errc::DimMismatch, "model dim " + std::to_string(model.dim()) +
                                 " != encoder dim " + std::to_string(backend_dim));
  }
  std::vector<std::string> degraded;
  QueryFeatures features = extract_features(image, model, options.selection, encoder, llm,
                                            options.degraded_mode, &degraded);
  SimilarityScores scores = fuse_and_score(features.present(), model.matrix(), options.strategy);
  const std::size_t index = argmax_index(scores);
  return Prediction{index, model.labels()[index], std::move(scores), std::move(features),
                    std::move(degraded)};
}

std::vector<BatchEntry> classify_batch(const std::vector<std::string>& image_paths,
                                       const ClassifierModel& model,
                                       const PipelineOptions& options, EncoderBackend& encoder,
                                       LLMBackend& llm, std::size_t parallelism) {
  std::vector<BatchEntry> out(image_paths.size());
  parallel_for(image_paths.size(), parallelism, [&](std::size_t i) {
    out[i].index = i;
    try {
      const Bytes image = read_file(image_paths[i]);
      out[i].prediction = classify(image, model, options, encoder, llm);
    } catch (const Error& e) {
      out[i].error_code = e.code();
      out[i].error = e.what();
    } catch (const std::exception& e) {
      out[i].error_code = Errc::Io;
      out[i].error = e.what();
    }
  });
  return out;
}

}  // namespace zsfuse
