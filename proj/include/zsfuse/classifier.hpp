#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zsfuse/backends.hpp"
#include "zsfuse/embedding.hpp"
#include "zsfuse/prompts.hpp"

namespace zsfuse {

inline constexpr int kDefaultDescriptionSamples = 50;   // 5 prompts x 10 responses
inline constexpr double kClassDescriptionTemperature = 0.99;

enum class ClassFeatureModeKind { Labels, Template, Descriptions, Combined };

struct ClassFeatureMode {
  ClassFeatureModeKind kind = ClassFeatureModeKind::Labels;
  LabelTemplate label_template;  // Template / Combined
  int description_samples = kDefaultDescriptionSamples;  // k; Descriptions / Combined

  static ClassFeatureMode labels();
  static ClassFeatureMode with_template(LabelTemplate tmpl);
  static ClassFeatureMode descriptions(int k);
  static ClassFeatureMode combined(int k, LabelTemplate tmpl);

  bool uses_llm() const {
    return kind == ClassFeatureModeKind::Descriptions || kind == ClassFeatureModeKind::Combined;
  }
  std::string name() const;
};

ClassFeatureModeKind class_feature_mode_from_name(const std::string& name);
void check_description_samples(int k);  // k >= 5 and divisible by 5

struct ModelProvenance {
  std::string encoder_identity;
  std::string llm_identity;  // empty when the mode never consults the LLM
  std::string prompt_asset_version;
};

/// The zero-shot linear classifier: class feature matrix plus the ordered
/// label strings its columns correspond to.
class ClassifierModel {
 public:
  ClassifierModel(ClassFeatureMatrix matrix, std::vector<std::string> labels,
                  ClassFeatureMode mode, ModelProvenance provenance);

  const ClassFeatureMatrix& matrix() const { return matrix_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const ClassFeatureMode& mode() const { return mode_; }
  const ModelProvenance& provenance() const { return provenance_; }
  std::size_t dim() const { return matrix_.dim(); }
  std::size_t class_count() const { return matrix_.classes(); }

  // Versioned container: magic "ZSFM", u32 version, u64 JSON header length,
  // header (labels, mode, provenance, dim), then little-endian f32 columns.
  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);

 private:
  ClassFeatureMatrix matrix_;
  std::vector<std::string> labels_;
  ClassFeatureMode mode_;
  ModelProvenance provenance_;
};

EmbeddingVector build_label_feature(const std::string& label, EncoderBackend& encoder);
EmbeddingVector build_template_feature(const std::string& label, const LabelTemplate& tmpl,
                                       EncoderBackend& encoder);

// Raw elementwise mean of the k encoded LLM class descriptions (not
// normalized); the Combined column sums it with the other two parts before
// the single final normalization.
EmbeddingVector build_description_mean(const std::string& label, int k, LLMBackend& llm,
                                       EncoderBackend& encoder);
// Standalone Descriptions-mode column: the mean above, normalized.
EmbeddingVector build_description_feature(const std::string& label, int k, LLMBackend& llm,
                                          EncoderBackend& encoder);

EmbeddingVector build_combined_feature(const EmbeddingVector& label_feat,
                                       const EmbeddingVector& template_feat,
                                       const EmbeddingVector& description_mean);

ClassifierModel build_classifier(const std::vector<std::string>& labels,
                                 const ClassFeatureMode& mode, EncoderBackend& encoder,
                                 LLMBackend* llm, std::size_t parallelism = 8);

}  // namespace zsfuse
