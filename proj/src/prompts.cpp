#include "zsfuse/prompts.hpp"

#include <array>

#include "zsfuse/errors.hpp"

namespace zsfuse {

namespace {

constexpr std::string_view kPromptAssetVersion = "1";

constexpr std::string_view kClassificationBody =
    "You are given an image and a list of class labels. Classify the image given the class "
    "labels. Answer using a single word if possible. Here are the class labels: {classes}";

constexpr std::string_view kDescriptionBody =
    "What do you see? Describe any object precisely, including its type or class.";

constexpr std::array<std::string_view, kClassDescriptionPromptCount> kClassDescriptionBodies = {
    "Describe what a {class_label} looks like in one or two sentences.",
    "How can you identify a {class_label} in one or two sentences?",
    "What does a {class_label} look like? Respond with one or two sentences.",
    "Describe an image from the internet of a {class_label}. Respond with one or two sentences.",
    "A short caption of an image of a {class_label}:",
};

constexpr std::string_view kDefaultTemplate = "A photo of {class_label}";
constexpr std::string_view kPetsTemplate = "A photo of {class_label}, a type of pets";
constexpr std::string_view kDtdTemplate = "A photo of {class_label}, a textural category";
constexpr std::string_view kCarsTemplate = "A photo of {class_label}, a car model";

constexpr std::string_view kClassLabelPlaceholder = "{class_label}";
constexpr std::string_view kClassesPlaceholder = "{classes}";

std::string replace_once(std::string_view body, std::string_view placeholder,
                         std::string_view value) {
  const auto pos = body.find(placeholder);
  std::string out(body);
  if (pos == std::string_view::npos) {
    return out;
  }
  out.replace(pos, placeholder.size(), value);
  return out;
}

}  // namespace

std::string_view prompt_asset_version() { return kPromptAssetVersion; }

std::string_view classification_prompt_body() { return kClassificationBody; }

std::string_view description_prompt_body() { return kDescriptionBody; }

std::span<const std::string_view> class_description_prompt_bodies() {
  return kClassDescriptionBodies;
}

LabelTemplate default_label_template() { return {std::string(kDefaultTemplate), ""}; }

std::optional<LabelTemplate> label_template_for_dataset(std::string_view tag) {
  if (tag == "pets") return LabelTemplate{std::string(kPetsTemplate), "pets"};
  if (tag == "dtd") return LabelTemplate{std::string(kDtdTemplate), "dtd"};
  if (tag == "cars") return LabelTemplate{std::string(kCarsTemplate), "cars"};
  return std::nullopt;
}

LabelTemplate make_label_template(std::string pattern, std::string dataset_tag) {
  const auto first = pattern.find(kClassLabelPlaceholder);
  if (first == std::string::npos) {
    raise(Errc::InvalidArgument, "label template must contain {class_label}");
  }
  if (pattern.find(kClassLabelPlaceholder, first + 1) != std::string::npos) {
    raise(Errc::InvalidArgument, "label template must contain exactly one {class_label}");
  }
  return {std::move(pattern), std::move(dataset_tag)};
}

std::string render_classification_prompt(std::span<const std::string> labels) {
  if (labels.empty()) {
    raise(Errc::EmptyLabelSet, "classification prompt needs at least one label");
  }
  std::string joined;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) {
      raise(Errc::EmptyLabel, "class label " + std::to_string(i) + " is empty");
    }
    if (i > 0) joined += ", ";
    joined += labels[i];
  }
  return replace_once(kClassificationBody, kClassesPlaceholder, joined);
}

std::array<std::string, kClassDescriptionPromptCount> render_class_description_prompts(
    std::string_view label) {
  if (label.empty()) {
    raise(Errc::EmptyLabel, "class label is empty");
  }
  std::array<std::string, kClassDescriptionPromptCount> out;
  for (std::size_t i = 0; i < kClassDescriptionPromptCount; ++i) {
    out[i] = replace_once(kClassDescriptionBodies[i], kClassLabelPlaceholder, label);
  }
  return out;
}

std::string render_label_template(const LabelTemplate& tmpl, std::string_view label) {
  if (label.empty()) {
    raise(Errc::EmptyLabel, "class label is empty");
  }
  return replace_once(tmpl.pattern, kClassLabelPlaceholder, label);
}

std::string render_combined_query_prompt(std::span<const std::string> labels) {
  return std::string(kDescriptionBody) + "\n\n" + render_classification_prompt(labels);
}

}  // namespace zsfuse
