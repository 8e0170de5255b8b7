#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace zsfuse {

inline constexpr std::size_t kClassDescriptionPromptCount = 5;

// The prompt set is a versioned, embedded asset: the bytes below are part of
// the artifact contract and must not drift between releases.
std::string_view prompt_asset_version();
std::string_view classification_prompt_body();  // contains {classes}
std::string_view description_prompt_body();     // no placeholder
std::span<const std::string_view> class_description_prompt_bodies();  // 5 bodies, fixed order

/// Dataset class-label template, e.g. "A photo of {class_label}".
struct LabelTemplate {
  std::string pattern;      // contains exactly one {class_label}
  std::string dataset_tag;  // optional dataset name, may be empty
};

LabelTemplate default_label_template();
// Documented per-dataset overrides: "pets", "dtd", "cars".
std::optional<LabelTemplate> label_template_for_dataset(std::string_view tag);
LabelTemplate make_label_template(std::string pattern, std::string dataset_tag = "");

std::string render_classification_prompt(std::span<const std::string> labels);
std::array<std::string, kClassDescriptionPromptCount> render_class_description_prompts(
    std::string_view label);
std::string render_label_template(const LabelTemplate& tmpl, std::string_view label);

// Description and classification tasks merged into one LLM query. Exposed for
// operators driving an LLM by hand; the inference pipeline always issues the
// two queries separately because no response-splitting convention exists.
std::string render_combined_query_prompt(std::span<const std::string> labels);

}  // namespace zsfuse
