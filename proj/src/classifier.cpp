#include "zsfuse/classifier.hpp"

#include <bit>
#include <cstring>
#include <set>

#include "json.hpp"
#include "zsfuse/parallel.hpp"

namespace zsfuse {

namespace {

using nlohmann::json;

constexpr char kModelMagic[4] = {'Z', 'S', 'F', 'M'};
constexpr std::uint32_t kModelVersion = 1;

void append_u32_le(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void append_u64_le(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

std::uint32_t read_u32_le(std::span<const std::uint8_t> data, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(data[off + i]) << (8 * i);
  }
  return v;
}

std::uint64_t read_u64_le(std::span<const std::uint8_t> data, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(data[off + i]) << (8 * i);
  }
  return v;
}

void check_label(const std::string& label) {
  if (label.empty()) {
    raise(Errc::EmptyLabel, "class label is empty");
  }
}

}  // namespace

ClassFeatureMode ClassFeatureMode::labels() { return {}; }

ClassFeatureMode ClassFeatureMode::with_template(LabelTemplate tmpl) {
  ClassFeatureMode mode;
  mode.kind = ClassFeatureModeKind::Template;
  mode.label_template = std::move(tmpl);
  return mode;
}

ClassFeatureMode ClassFeatureMode::descriptions(int k) {
  check_description_samples(k);
  ClassFeatureMode mode;
  mode.kind = ClassFeatureModeKind::Descriptions;
  mode.description_samples = k;
  return mode;
}

ClassFeatureMode ClassFeatureMode::combined(int k, LabelTemplate tmpl) {
  check_description_samples(k);
  ClassFeatureMode mode;
  mode.kind = ClassFeatureModeKind::Combined;
  mode.description_samples = k;
  mode.label_template = std::move(tmpl);
  return mode;
}

std::string ClassFeatureMode::name() const {
  switch (kind) {
    case ClassFeatureModeKind::Labels: return "labels";
    case ClassFeatureModeKind::Template: return "template";
    case ClassFeatureModeKind::Descriptions: return "descriptions";
    case ClassFeatureModeKind::Combined: return "combined";
  }
  return "labels";
}

ClassFeatureModeKind class_feature_mode_from_name(const std::string& name) {
  if (name == "labels") return ClassFeatureModeKind::Labels;
  if (name == "template") return ClassFeatureModeKind::Template;
  if (name == "descriptions") return ClassFeatureModeKind::Descriptions;
  if (name == "combined") return ClassFeatureModeKind::Combined;
  raise(Errc::InvalidArgument, "unknown class feature mode: " + name);
}

void check_description_samples(int k) {
  if (k < static_cast<int>(kClassDescriptionPromptCount) ||
      k % static_cast<int>(kClassDescriptionPromptCount) != 0) {
    raise(Errc::InvalidArgument,
          "description sample count must be >= 5 and divisible by 5, got " + std::to_string(k));
  }
}

ClassifierModel::ClassifierModel(ClassFeatureMatrix matrix, std::vector<std::string> labels,
                                 ClassFeatureMode mode, ModelProvenance provenance)
    : matrix_(std::move(matrix)),
      labels_(std::move(labels)),
      mode_(std::move(mode)),
      provenance_(std::move(provenance)) {
  if (labels_.size() != matrix_.classes()) {
    raise(Errc::InvalidArgument, "label count does not match matrix columns");
  }
  std::set<std::string> seen;
  for (const auto& label : labels_) {
    check_label(label);
    if (!seen.insert(label).second) {
      raise(Errc::DuplicateLabel, "duplicate class label: " + label);
    }
  }
}

EmbeddingVector build_label_feature(const std::string& label, EncoderBackend& encoder) {
  check_label(label);
  return normalize(encoder.encode_text(label));
}

EmbeddingVector build_template_feature(const std::string& label, const LabelTemplate& tmpl,
                                       EncoderBackend& encoder) {
  check_label(label);
  return normalize(encoder.encode_text(render_label_template(tmpl, label)));
}

EmbeddingVector build_description_mean(const std::string& label, int k, LLMBackend& llm,
                                       EncoderBackend& encoder) {
  check_label(label);
  check_description_samples(k);
  const auto prompts = render_class_description_prompts(label);
  const int rounds = k / static_cast<int>(kClassDescriptionPromptCount);

  std::vector<long double> acc;
  std::set<std::size_t> failed_prompts;
  std::string first_failure;
  int collected = 0;
  for (int round = 0; round < rounds; ++round) {
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      std::string text;
      try {
        text = llm.generate(prompts[p], std::nullopt, kClassDescriptionTemperature);
      } catch (const Error& e) {
        failed_prompts.insert(p + 1);
        if (first_failure.empty()) first_failure = e.what();
        continue;
      }
      const EmbeddingVector enc = encoder.encode_text(text);
      if (acc.empty()) {
        acc.assign(enc.dim(), 0.0L);
      } else if (acc.size() != enc.dim()) {
        raise(Errc::DimMismatch, "encoder dim changed across description samples");
      }
      for (std::size_t i = 0; i < enc.dim(); ++i) {
        acc[i] += enc[i];
      }
      ++collected;
    }
  }
  if (collected < k) {
    std::string which;
    for (std::size_t p : failed_prompts) {
      which += (which.empty() ? "" : ",") + std::to_string(p);
    }
    raise(Errc::PartialGeneration,
          "only " + std::to_string(collected) + "/" + std::to_string(k) +
              " descriptions for '" + label + "' (failing prompts: " + which +
              "; first error: " + first_failure + ")");
  }
  std::vector<double> mean(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    mean[i] = static_cast<double>(acc[i] / static_cast<long double>(k));
  }
  return EmbeddingVector(std::move(mean));
}

EmbeddingVector build_description_feature(const std::string& label, int k, LLMBackend& llm,
                                          EncoderBackend& encoder) {
  return normalize(build_description_mean(label, k, llm, encoder));
}

EmbeddingVector build_combined_feature(const EmbeddingVector& label_feat,
                                       const EmbeddingVector& template_feat,
                                       const EmbeddingVector& description_mean) {
  if (label_feat.dim() != template_feat.dim() || label_feat.dim() != description_mean.dim()) {
    raise(Errc::DimMismatch, "combined feature parts must share one dim");
  }
  std::vector<double> sum(label_feat.dim());
  for (std::size_t i = 0; i < sum.size(); ++i) {
    sum[i] = label_feat[i] + template_feat[i] + description_mean[i];
  }
  return normalize(EmbeddingVector(std::move(sum)));
}

ClassifierModel build_classifier(const std::vector<std::string>& labels,
                                 const ClassFeatureMode& mode, EncoderBackend& encoder,
                                 LLMBackend* llm, std::size_t parallelism) {
  if (labels.empty()) {
    raise(Errc::EmptyLabelSet, "classifier needs at least one label");
  }
  {
    std::set<std::string> seen;
    for (const auto& label : labels) {
      check_label(label);
      if (!seen.insert(label).second) {
        raise(Errc::DuplicateLabel, "duplicate class label: " + label);
      }
    }
  }
  if (mode.uses_llm()) {
    check_description_samples(mode.description_samples);
    if (llm == nullptr) {
      raise(Errc::InvalidArgument, "mode '" + mode.name() + "' needs an LLM backend");
    }
  }

  std::vector<std::optional<EmbeddingVector>> columns(labels.size());
  parallel_for(labels.size(), parallelism, [&](std::size_t i) {
    const std::string& label = labels[i];
    try {
      switch (mode.kind) {
        case ClassFeatureModeKind::Labels:
          columns[i] = build_label_feature(label, encoder);
          break;
        case ClassFeatureModeKind::Template:
          columns[i] = build_template_feature(label, mode.label_template, encoder);
          break;
        case ClassFeatureModeKind::Descriptions:
          columns[i] =
              build_description_feature(label, mode.description_samples, *llm, encoder);
          break;
        case ClassFeatureModeKind::Combined: {
          const auto label_feat = build_label_feature(label, encoder);
          const auto template_feat = build_template_feature(label, mode.label_template, encoder);
          const auto mean = build_description_mean(label, mode.description_samples, *llm, encoder);
          columns[i] = build_combined_feature(label_feat, template_feat, mean);
          break;
        }
      }
    } catch (const Error& e) {
      throw Error(e.code(), "label '" + label + "': " + e.what());
    }
  });

  std::vector<EmbeddingVector> built;
  built.reserve(columns.size());
  for (auto& c : columns) {
    built.push_back(std::move(*c));
  }
  ModelProvenance provenance{encoder.identity(), mode.uses_llm() ? llm->identity() : "",
                             std::string(prompt_asset_version())};
  return ClassifierModel(ClassFeatureMatrix(built), labels, mode, std::move(provenance));
}

void ClassifierModel::save(const std::filesystem::path& path) const {
  json mode_json{{"kind", mode_.name()}};
  if (mode_.kind == ClassFeatureModeKind::Template ||
      mode_.kind == ClassFeatureModeKind::Combined) {
    mode_json["template"] = {{"pattern", mode_.label_template.pattern},
                             {"dataset_tag", mode_.label_template.dataset_tag}};
  }
  if (mode_.uses_llm()) {
    mode_json["k"] = mode_.description_samples;
  }
  const json header{
      {"dim", matrix_.dim()},
      {"classes", matrix_.classes()},
      {"labels", labels_},
      {"mode", mode_json},
      {"provenance",
       {{"encoder", provenance_.encoder_identity},
        {"llm", provenance_.llm_identity},
        {"prompt_asset_version", provenance_.prompt_asset_version}}},
  };
  const std::string header_text = header.dump();

  Bytes out;
  out.insert(out.end(), kModelMagic, kModelMagic + 4);
  append_u32_le(out, kModelVersion);
  append_u64_le(out, header_text.size());
  out.insert(out.end(), header_text.begin(), header_text.end());
  for (double v : matrix_.data()) {
    append_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_file(path, out);
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  Bytes data;
  try {
    data = read_file(path);
  } catch (const Error& e) {
    raise(Errc::Io, "cannot load model: " + std::string(e.what()));
  }
  if (data.size() < 16 || std::memcmp(data.data(), kModelMagic, 4) != 0) {
    raise(Errc::Protocol, "not a classifier model file: " + path.string());
  }
  if (read_u32_le(data, 4) != kModelVersion) {
    raise(Errc::Protocol, "unsupported model version");
  }
  const std::uint64_t header_len = read_u64_le(data, 8);
  if (data.size() < 16 + header_len) {
    raise(Errc::Protocol, "truncated model header");
  }
  json header;
  try {
    header = json::parse(data.begin() + 16, data.begin() + 16 + header_len);
  } catch (const json::exception& e) {
    raise(Errc::Protocol, "bad model header: " + std::string(e.what()));
  }

  const std::size_t dim = header.at("dim").get<std::size_t>();
  const std::size_t classes = header.at("classes").get<std::size_t>();
  const auto labels = header.at("labels").get<std::vector<std::string>>();
  const std::size_t body_off = 16 + header_len;
  if (data.size() != body_off + dim * classes * 4) {
    raise(Errc::Protocol, "model body size mismatch");
  }
  std::vector<double> values(dim * classes);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(
        std::bit_cast<float>(read_u32_le(data, body_off + i * 4)));
  }

  const json& mode_json = header.at("mode");
  ClassFeatureMode mode;
  mode.kind = class_feature_mode_from_name(mode_json.at("kind").get<std::string>());
  if (mode_json.contains("template")) {
    mode.label_template = make_label_template(mode_json["template"].at("pattern"),
                                              mode_json["template"].value("dataset_tag", ""));
  }
  if (mode_json.contains("k")) {
    mode.description_samples = mode_json["k"].get<int>();
  }
  const json& prov = header.at("provenance");
  ModelProvenance provenance{prov.value("encoder", ""), prov.value("llm", ""),
                             prov.value("prompt_asset_version", "")};
  return ClassifierModel(ClassFeatureMatrix(dim, std::move(values)), labels, std::move(mode),
                         std::move(provenance));
}

}  // namespace zsfuse
