#include "zsfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "zsfuse/image.hpp"
#include "zsfuse/parallel.hpp"

namespace zsfuse {

namespace {

using nlohmann::json;

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) {
    return value;
  }
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') quoted += "\"\"";
    else quoted += c;
  }
  quoted += "\"";
  return quoted;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::filesystem::path DatasetManifest::resolve_image(std::size_t record_index) const {
  const std::filesystem::path p(records[record_index].image);
  return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool strict_images) {
  if (!std::filesystem::exists(path)) {
    raise(Errc::ManifestUnreadable, "manifest not found: " + path.string());
  }
  json parsed;
  try {
    parsed = json::parse(to_string(read_file(path)));
  } catch (const std::exception& e) {
    raise(Errc::ManifestParse, "manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!parsed.is_object() || !parsed.contains("labels") || !parsed["labels"].is_array()) {
    raise(Errc::ManifestParse, "manifest needs a labels array");
  }

  DatasetManifest manifest;
  manifest.name = parsed.value("name", "");
  manifest.base_dir = std::filesystem::absolute(path).parent_path();
  manifest.labels = parsed["labels"].get<std::vector<std::string>>();
  if (manifest.labels.empty()) {
    raise(Errc::EmptyLabelSet, "manifest has no labels");
  }
  std::set<std::string> seen;
  for (const auto& label : manifest.labels) {
    if (label.empty()) {
      raise(Errc::EmptyLabel, "manifest contains an empty label");
    }
    if (!seen.insert(label).second) {
      raise(Errc::DuplicateLabel, "duplicate manifest label: " + label);
    }
  }
  if (parsed.contains("template_override") && !parsed["template_override"].is_null()) {
    manifest.template_override =
        make_label_template(parsed["template_override"].get<std::string>());
  }
  for (const auto& rec : parsed.value("records", json::array())) {
    if (!rec.is_object() || !rec.contains("image") || !rec.contains("label_index")) {
      raise(Errc::ManifestParse, "record needs image and label_index");
    }
    ManifestRecord r{rec["image"].get<std::string>(), 0};
    const auto idx = rec["label_index"].get<std::int64_t>();
    if (idx < 0 || static_cast<std::size_t>(idx) >= manifest.labels.size()) {
      raise(Errc::IndexOutOfRange,
            "record label_index " + std::to_string(idx) + " outside [0, " +
                std::to_string(manifest.labels.size()) + ")");
    }
    r.label_index = static_cast<std::size_t>(idx);
    manifest.records.push_back(std::move(r));
  }
  if (strict_images) {
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (!std::filesystem::exists(manifest.resolve_image(i))) {
        raise(Errc::MissingImage, "missing image: " + manifest.records[i].image);
      }
    }
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  json records = json::array();
  for (const auto& r : manifest.records) {
    records.push_back({{"image", r.image}, {"label_index", r.label_index}});
  }
  json out{{"name", manifest.name}, {"labels", manifest.labels}, {"records", records}};
  if (manifest.template_override) {
    out["template_override"] = manifest.template_override->pattern;
  }
  write_file(path, out.dump(2) + "\n");
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) {
    raise(Errc::InvalidArgument, "confusion matrix needs at least one class");
  }
}

void ConfusionMatrix::add(std::size_t true_index, std::size_t predicted_index) {
  if (true_index >= classes_ || predicted_index >= classes_) {
    raise(Errc::IndexOutOfRange, "confusion index outside class range");
  }
  counts_[true_index * classes_ + predicted_index] += 1;
  total_ += 1;
}

void ConfusionMatrix::set(std::size_t true_index, std::size_t predicted_index,
                          std::uint64_t count) {
  if (true_index >= classes_ || predicted_index >= classes_) {
    raise(Errc::IndexOutOfRange, "confusion index outside class range");
  }
  std::uint64_t& cell = counts_[true_index * classes_ + predicted_index];
  total_ = total_ - cell + count;
  cell = count;
}

std::uint64_t ConfusionMatrix::at(std::size_t true_index, std::size_t predicted_index) const {
  if (true_index >= classes_ || predicted_index >= classes_) {
    raise(Errc::IndexOutOfRange, "confusion index outside class range");
  }
  return counts_[true_index * classes_ + predicted_index];
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes_; ++i) {
    t += counts_[i * classes_ + i];
  }
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t true_index) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < classes_; ++j) {
    s += at(true_index, j);
  }
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t predicted_index) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < classes_; ++i) {
    s += at(i, predicted_index);
  }
  return s;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;  // ties break to the lowest index
  });
  order.resize(std::min(k, order.size()));
  return order;
}

double top_k_accuracy(std::span<const std::vector<double>> score_vectors,
                      std::span<const std::size_t> true_indices, std::size_t k) {
  if (k < 1) {
    raise(Errc::InvalidArgument, "k must be >= 1");
  }
  if (score_vectors.empty() || score_vectors.size() != true_indices.size()) {
    raise(Errc::EmptyPredictions, "need matching, nonempty score vectors and true indices");
  }
  const std::size_t m = score_vectors.front().size();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < score_vectors.size(); ++r) {
    if (score_vectors[r].size() != m) {
      raise(Errc::DimMismatch, "score vectors must share one length");
    }
    const auto top = top_k_indices(score_vectors[r], k);
    if (std::find(top.begin(), top.end(), true_indices[r]) != top.end()) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(score_vectors.size());
}

double cohens_kappa(const ConfusionMatrix& confusion) {
  if (confusion.total() == 0) {
    raise(Errc::EmptyMatrix, "kappa over an empty confusion matrix");
  }
  const double total = static_cast<double>(confusion.total());
  const double p_o = static_cast<double>(confusion.trace()) / total;
  long double expected = 0.0L;
  for (std::size_t i = 0; i < confusion.classes(); ++i) {
    expected += static_cast<long double>(confusion.row_sum(i)) *
                static_cast<long double>(confusion.col_sum(i));
  }
  const double p_e = static_cast<double>(expected / (static_cast<long double>(total) * total));
  if (std::abs(1.0 - p_e) < 1e-15) {
    // Degenerate chance agreement; all mass in one diagonal cell counts as 1.
    return p_o >= 1.0 - 1e-15 ? 1.0 : 0.0;
  }
  return (p_o - p_e) / (1.0 - p_e);
}

json EvaluationReport::to_json() const {
  json records_json = json::array();
  for (const auto& r : records) {
    json rec{{"image", r.image}, {"true_index", r.true_index}, {"failed", r.failed}};
    if (r.failed) {
      rec["error"] = r.error;
    } else {
      rec["predicted_index"] = r.predicted_index;
      rec["top5"] = r.top5;
      rec["degraded"] = r.degraded;
    }
    records_json.push_back(std::move(rec));
  }
  json confusion_json = json::array();
  for (std::size_t i = 0; i < confusion.classes(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < confusion.classes(); ++j) {
      row.push_back(confusion.at(i, j));
    }
    confusion_json.push_back(std::move(row));
  }
  return json{
      {"dataset", dataset},
      {"labels", labels},
      {"evaluated", evaluated},
      {"failed", failed},
      {"metrics", {{"top1", top1}, {"top5", top5}, {"kappa", kappa}}},
      {"confusion", confusion_json},
      {"counters",
       {{"encode_text_calls", counters.encode_text_calls},
        {"encode_image_calls", counters.encode_image_calls},
        {"generate_calls", counters.generate_calls},
        {"cache_hits", counters.cache_hits}}},
      {"config", config},
      {"records", records_json},
  };
}

EvaluationReport EvaluationReport::from_json(const json& j) {
  EvaluationReport report;
  report.dataset = j.value("dataset", "");
  report.labels = j.at("labels").get<std::vector<std::string>>();
  report.evaluated = j.value("evaluated", 0u);
  report.failed = j.value("failed", 0u);
  report.top1 = j.at("metrics").value("top1", 0.0);
  report.top5 = j.at("metrics").value("top5", 0.0);
  report.kappa = j.at("metrics").value("kappa", 0.0);
  const auto& confusion_json = j.at("confusion");
  if (!confusion_json.empty()) {
    report.confusion = ConfusionMatrix(confusion_json.size());
    for (std::size_t i = 0; i < confusion_json.size(); ++i) {
      for (std::size_t k = 0; k < confusion_json[i].size(); ++k) {
        report.confusion.set(i, k, confusion_json[i][k].get<std::uint64_t>());
      }
    }
  }
  const auto& counters = j.at("counters");
  report.counters.encode_text_calls = counters.value("encode_text_calls", 0u);
  report.counters.encode_image_calls = counters.value("encode_image_calls", 0u);
  report.counters.generate_calls = counters.value("generate_calls", 0u);
  report.counters.cache_hits = counters.value("cache_hits", 0u);
  report.config = j.value("config", json::object());
  for (const auto& rec : j.value("records", json::array())) {
    RecordOutcome r;
    r.image = rec.value("image", "");
    r.true_index = rec.value("true_index", 0u);
    r.failed = rec.value("failed", false);
    if (r.failed) {
      r.error = rec.value("error", "");
    } else {
      r.predicted_index = rec.value("predicted_index", 0u);
      r.top5 = rec.value("top5", std::vector<std::size_t>{});
      r.degraded = rec.value("degraded", std::vector<std::string>{});
    }
    report.records.push_back(std::move(r));
  }
  return report;
}

std::string EvaluationReport::to_csv() const {
  std::string out = "image,true_index,predicted_index,correct,top5_hit\n";
  for (const auto& r : records) {
    out += csv_field(r.image) + "," + std::to_string(r.true_index) + ",";
    if (r.failed) {
      out += ",0,0\n";
      continue;
    }
    const bool correct = r.predicted_index == r.true_index;
    const bool top5_hit =
        std::find(r.top5.begin(), r.top5.end(), r.true_index) != r.top5.end();
    out += std::to_string(r.predicted_index) + "," + (correct ? "1" : "0") + "," +
           (top5_hit ? "1" : "0") + "\n";
  }
  out += "summary,records," + std::to_string(records.size()) + ",,\n";
  out += "summary,evaluated," + std::to_string(evaluated) + ",,\n";
  out += "summary,failed," + std::to_string(failed) + ",,\n";
  out += "summary,top1," + format_metric(top1) + ",,\n";
  out += "summary,top5," + format_metric(top5) + ",,\n";
  out += "summary,kappa," + format_metric(kappa) + ",,\n";
  return out;
}

EvaluationReport evaluate(const DatasetManifest& manifest, const ClassifierModel* model,
                          const MethodConfig& config, EncoderBackend& encoder, LLMBackend& llm,
                          const CallCounters* counters) {
  if (manifest.records.empty()) {
    raise(Errc::EmptyPredictions, "manifest has no records to evaluate");
  }
  if (config.method == MethodConfig::Method::Pipeline) {
    if (model == nullptr) {
      raise(Errc::InvalidArgument, "pipeline evaluation needs a classifier model");
    }
    if (model->labels() != manifest.labels) {
      raise(Errc::InvalidArgument, "model labels do not match manifest labels");
    }
  }
  const CounterSnapshot before = counters ? counters->snapshot() : CounterSnapshot{};

  const std::size_t m = manifest.labels.size();
  const std::size_t top_k = std::min<std::size_t>(5, m);

  struct RowResult {
    bool failed = false;
    std::string error;
    std::vector<double> scores;
    std::vector<std::string> degraded;
  };
  std::vector<RowResult> rows(manifest.records.size());

  if (config.method == MethodConfig::Method::Pipeline) {
    std::vector<std::string> paths;
    paths.reserve(manifest.records.size());
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      paths.push_back(manifest.resolve_image(i).string());
    }
    PipelineOptions options{config.selection, config.strategy, config.degraded_mode};
    const auto batch =
        classify_batch(paths, *model, options, encoder, llm, config.parallelism);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i].prediction) {
        rows[i].scores.assign(batch[i].prediction->scores.values().begin(),
                              batch[i].prediction->scores.values().end());
        rows[i].degraded = batch[i].prediction->degraded;
      } else {
        rows[i].failed = true;
        rows[i].error = batch[i].error;
      }
    }
  } else {
    const std::string prompt = render_classification_prompt(manifest.labels);
    parallel_for(manifest.records.size(), config.parallelism, [&](std::size_t i) {
      try {
        const Bytes raw = read_file(manifest.resolve_image(i));
        const Bytes resized = encode_png(
            resize_bilinear(decode_image(raw), kInputImageSide, kInputImageSide));
        const std::string text = llm.generate(prompt, resized, 0.0);
        rows[i].scores = match_scores(text, manifest.labels, config.baseline_metric, &encoder);
      } catch (const Error& e) {
        rows[i].failed = true;
        rows[i].error = e.what();
      } catch (const std::exception& e) {
        rows[i].failed = true;
        rows[i].error = e.what();
      }
    });
  }

  EvaluationReport report;
  report.dataset = manifest.name;
  report.labels = manifest.labels;
  report.confusion = ConfusionMatrix(m);

  std::vector<std::vector<double>> success_scores;
  std::vector<std::size_t> success_true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    RecordOutcome outcome;
    outcome.image = manifest.records[i].image;
    outcome.true_index = manifest.records[i].label_index;
    if (rows[i].failed) {
      outcome.failed = true;
      outcome.error = rows[i].error;
      report.failed += 1;
    } else {
      outcome.predicted_index = argmax_index(rows[i].scores);
      outcome.top5 = top_k_indices(rows[i].scores, top_k);
      outcome.degraded = rows[i].degraded;
      report.confusion.add(outcome.true_index, outcome.predicted_index);
      success_scores.push_back(std::move(rows[i].scores));
      success_true.push_back(outcome.true_index);
      report.evaluated += 1;
    }
    report.records.push_back(std::move(outcome));
  }

  const double failure_rate =
      static_cast<double>(report.failed) / static_cast<double>(manifest.records.size());
  if (failure_rate > config.failure_fraction) {
    std::string first;
    for (const auto& r : report.records) {
      if (r.failed) {
        first = r.error;
        break;
      }
    }
    raise(Errc::TooManyFailures,
          std::to_string(report.failed) + "/" + std::to_string(manifest.records.size()) +
              " records failed (threshold " + format_metric(config.failure_fraction) +
              "); first: " + first);
  }
  if (report.evaluated == 0) {
    raise(Errc::EmptyPredictions, "no records evaluated successfully");
  }

  report.top1 = top_k_accuracy(success_scores, success_true, 1);
  report.top5 = top_k_accuracy(success_scores, success_true, top_k);
  report.kappa = cohens_kappa(report.confusion);

  json config_json{
      {"method", config.method == MethodConfig::Method::Pipeline ? "pipeline" : "baseline"},
      {"degraded_mode", config.degraded_mode},
      {"parallelism", config.parallelism},
      {"failure_fraction", config.failure_fraction},
      {"resize", "bilinear-224x224"},
      {"prompt_asset_version", std::string(prompt_asset_version())},
  };
  if (config.method == MethodConfig::Method::Pipeline) {
    config_json["selection"] = config.selection.name();
    config_json["strategy"] = fusion_strategy_name(config.strategy);
    config_json["class_feature_mode"] = model->mode().name();
    config_json["provenance"] = {{"encoder", model->provenance().encoder_identity},
                                 {"llm", model->provenance().llm_identity}};
  } else {
    config_json["baseline"] = config.baseline_metric.name();
    config_json["tokenizer"] = "lowercase-nonalnum-split";
  }
  config_json["backend"] = {{"encoder", encoder.identity()}, {"llm", llm.identity()}};
  if (config.extra_config.is_object()) {
    config_json.update(config.extra_config);
  }
  report.config = std::move(config_json);

  if (counters) {
    const CounterSnapshot after = counters->snapshot();
    report.counters = {after.encode_text_calls - before.encode_text_calls,
                       after.encode_image_calls - before.encode_image_calls,
                       after.generate_calls - before.generate_calls,
                       after.cache_hits - before.cache_hits};
  }
  return report;
}

Bytes emit_report(const EvaluationReport& report, ReportFormat format) {
  if (format == ReportFormat::Json) {
    const std::string text = report.to_json().dump(2) + "\n";
    return to_bytes(text);
  }
  return to_bytes(report.to_csv());
}

}  // namespace zsfuse
