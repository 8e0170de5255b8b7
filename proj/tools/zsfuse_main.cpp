#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "zsfuse/attribution.hpp"
#include "zsfuse/cache.hpp"
#include "zsfuse/classifier.hpp"
#include "zsfuse/evaluation.hpp"
#include "zsfuse/http_backend.hpp"
#include "zsfuse/mock_backend.hpp"
#include "zsfuse/pipeline.hpp"

namespace {

using nlohmann::json;
using namespace zsfuse;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::InvalidArgument:
    case Errc::DuplicateLabel:
    case Errc::EmptyLabelSet:
    case Errc::EmptyLabel:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

struct RunConfig {
  std::string backend = "auto";  // auto | mock | http
  std::string encoder_url;
  std::string llm_url;
  std::string api_key;
  std::string cache_dir;
  bool no_cache = false;
  std::uint64_t seed = 0;
  std::size_t mock_dim = 64;
  std::size_t parallelism = 8;
  bool verbose = false;

  std::shared_ptr<CallCounters> counters = std::make_shared<CallCounters>();
  std::shared_ptr<EncoderBackend> encoder;
  std::shared_ptr<LLMBackend> llm;

  bool use_mock() const {
    if (backend == "mock") return true;
    if (backend == "http") return false;
    return encoder_url.empty() && llm_url.empty();
  }

  void resolve() {
    const bool mock = use_mock();
    if (verbose) {
      std::fprintf(stderr, "[zsfuse] backend=%s (flags override env; --backend=%s)\n",
                   mock ? "mock" : "http", backend.c_str());
    }
    std::shared_ptr<EncoderBackend> base_encoder;
    std::shared_ptr<LLMBackend> base_llm;
    if (mock) {
      base_encoder = std::make_shared<MockEncoder>(mock_dim, seed);
      base_llm = std::make_shared<MockLLM>(seed);
    } else {
      if (encoder_url.empty() || llm_url.empty()) {
        raise(Errc::InvalidArgument,
              "http backend needs --encoder-url and --llm-url (or ZSFUSE_ENCODER_URL / "
              "ZSFUSE_LLM_URL)");
      }
      HttpBackendOptions enc_opts;
      enc_opts.endpoint = encoder_url;
      enc_opts.api_key = api_key;
      HttpBackendOptions llm_opts;
      llm_opts.endpoint = llm_url;
      llm_opts.api_key = api_key;
      base_encoder = std::make_shared<HttpEncoder>(enc_opts);
      base_llm = std::make_shared<HttpLLM>(llm_opts);
    }
    std::shared_ptr<CacheStore> store;
    if (!cache_dir.empty() && !no_cache) {
      store = std::make_shared<CacheStore>(cache_dir);
      if (verbose) {
        std::fprintf(stderr, "[zsfuse] cache dir: %s\n", cache_dir.c_str());
      }
    }
    encoder = std::make_shared<CachedEncoder>(base_encoder, store, counters);
    llm = std::make_shared<CachedLLM>(base_llm, store, counters);
  }

  json snapshot() const {
    return json{{"backend", use_mock() ? "mock" : "http"},
                {"cache", !cache_dir.empty() && !no_cache},
                {"seed", seed},
                {"run_parallelism", parallelism}};
  }
};

std::vector<std::string> read_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::Io, "cannot open labels file: " + path);
  }
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      labels.push_back(line);
    }
  }
  return labels;
}

bool require_file(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path)) {
    std::fprintf(stderr, "error: %s not found: %s\n", what, path.c_str());
    return false;
  }
  return true;
}

int cmd_build(RunConfig& run, const std::string& labels_path, const std::string& manifest_path,
              const std::string& mode_name, const std::string& template_pattern,
              const std::string& dataset_template, int k, const std::string& out_path) {
  std::vector<std::string> labels;
  std::optional<LabelTemplate> manifest_template;
  if (!manifest_path.empty()) {
    if (!require_file(manifest_path, "manifest")) return kExitUsage;
    const DatasetManifest manifest = load_manifest(manifest_path);
    labels = manifest.labels;
    manifest_template = manifest.template_override;
  } else if (!labels_path.empty()) {
    if (!require_file(labels_path, "labels file")) return kExitUsage;
    labels = read_labels_file(labels_path);
  } else {
    std::fprintf(stderr, "error: build needs --labels or --manifest\n");
    return kExitUsage;
  }

  LabelTemplate tmpl = default_label_template();
  if (!template_pattern.empty()) {
    tmpl = make_label_template(template_pattern);
  } else if (!dataset_template.empty()) {
    const auto t = label_template_for_dataset(dataset_template);
    if (!t) {
      std::fprintf(stderr, "error: unknown dataset template '%s' (pets, dtd, cars)\n",
                   dataset_template.c_str());
      return kExitUsage;
    }
    tmpl = *t;
  } else if (manifest_template) {
    tmpl = *manifest_template;
  }

  ClassFeatureMode mode;
  mode.kind = class_feature_mode_from_name(mode_name);
  mode.label_template = tmpl;
  mode.description_samples = k;
  if (mode.uses_llm()) {
    check_description_samples(k);
  }

  run.resolve();
  const ClassifierModel model =
      build_classifier(labels, mode, *run.encoder, run.llm.get(), run.parallelism);
  model.save(out_path);
  std::printf("built classifier: classes=%zu dim=%zu mode=%s encoder=%s\n", model.class_count(),
              model.dim(), model.mode().name().c_str(),
              model.provenance().encoder_identity.c_str());
  std::printf("model written to %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_classify(RunConfig& run, const std::string& image_path, const std::string& model_path,
                 const std::string& features, const std::string& strategy, bool degraded,
                 bool as_json) {
  if (!require_file(model_path, "model file") || !require_file(image_path, "image")) {
    return kExitUsage;
  }
  const ClassifierModel model = ClassifierModel::load(model_path);
  run.resolve();
  PipelineOptions options;
  options.selection = FeatureSelection::parse(features);
  options.strategy = fusion_strategy_from_name(strategy);
  options.degraded_mode = degraded;

  const Prediction prediction =
      classify(read_file(image_path), model, options, *run.encoder, *run.llm);
  const auto top = top_k_indices(prediction.scores.values(),
                                 std::min<std::size_t>(5, model.class_count()));
  if (as_json) {
    json top_json = json::array();
    for (std::size_t idx : top) {
      top_json.push_back({{"index", idx},
                          {"label", model.labels()[idx]},
                          {"score", prediction.scores[idx]}});
    }
    json out{{"class_index", prediction.class_index},
             {"class_label", prediction.class_label},
             {"top5", top_json},
             {"scores", std::vector<double>(prediction.scores.values().begin(),
                                            prediction.scores.values().end())},
             {"degraded", prediction.degraded}};
    if (prediction.features.description_text) {
      out["description_text"] = *prediction.features.description_text;
    }
    if (prediction.features.prediction_text) {
      out["prediction_text"] = *prediction.features.prediction_text;
    }
    std::printf("%s\n", out.dump(2).c_str());
    return kExitOk;
  }
  std::printf("predicted: %s (index %zu)\n", prediction.class_label.c_str(),
              prediction.class_index);
  for (std::size_t idx : top) {
    std::printf("  %-24s %.6f\n", model.labels()[idx].c_str(), prediction.scores[idx]);
  }
  for (const auto& d : prediction.degraded) {
    std::printf("note: %s feature unavailable, skipped\n", d.c_str());
  }
  return kExitOk;
}

int cmd_evaluate(RunConfig& run, const std::string& manifest_path, const std::string& model_path,
                 const std::string& features, const std::string& strategy,
                 const std::string& baseline, bool degraded, double failure_fraction,
                 const std::string& out_json, const std::string& out_csv) {
  if (!require_file(manifest_path, "manifest")) return kExitUsage;
  const DatasetManifest manifest = load_manifest(manifest_path);

  MethodConfig config;
  config.degraded_mode = degraded;
  config.parallelism = run.parallelism;
  config.failure_fraction = failure_fraction;
  config.extra_config = run.snapshot();

  std::optional<ClassifierModel> model;
  if (!baseline.empty()) {
    config.method = MethodConfig::Method::Baseline;
    config.baseline_metric = MatchMetric::parse(baseline);
  } else {
    if (model_path.empty()) {
      std::fprintf(stderr, "error: evaluate needs --model (or --baseline)\n");
      return kExitUsage;
    }
    if (!require_file(model_path, "model file")) return kExitUsage;
    model = ClassifierModel::load(model_path);
    config.selection = FeatureSelection::parse(features);
    config.strategy = fusion_strategy_from_name(strategy);
  }

  run.resolve();
  const EvaluationReport report = evaluate(manifest, model ? &*model : nullptr, config,
                                           *run.encoder, *run.llm, run.counters.get());
  write_file(out_json, emit_report(report, ReportFormat::Json));
  write_file(out_csv, emit_report(report, ReportFormat::Csv));
  std::printf("dataset=%s evaluated=%zu failed=%zu top1=%.4f top5=%.4f kappa=%.4f\n",
              report.dataset.c_str(), report.evaluated, report.failed, report.top1, report.top5,
              report.kappa);
  std::printf("report written to %s and %s\n", out_json.c_str(), out_csv.c_str());
  return kExitOk;
}

int cmd_attribute(RunConfig& run, const std::string& image_path, const std::string& model_path,
                  int kernel, int stride, int growth, int max_kernel, int text_width,
                  int min_text_width, double threshold, const std::string& out_png,
                  const std::string& out_json) {
  if (!require_file(model_path, "model file") || !require_file(image_path, "image")) {
    return kExitUsage;
  }
  const ClassifierModel model = ClassifierModel::load(model_path);
  run.resolve();

  AttributionOptions options;
  options.image = ImageMaskSchedule{kernel, stride, growth, max_kernel};
  options.text = TextMaskSchedule{text_width, min_text_width};
  options.highlight_threshold = threshold;

  const Bytes image = read_file(image_path);
  const AttributionMap map = attribute(image, model, *run.encoder, *run.llm, options);
  write_file(out_png, render_heatmap(map, image));
  write_file(out_json, attribution_to_json(map).dump(2) + "\n");

  std::printf("baseline class: %s (index %zu)\n", model.labels()[map.baseline_index].c_str(),
              map.baseline_index);
  std::printf("image kernel_used=%d%s\n", map.image.kernel_used,
              map.image.highlighted ? "" : " (no highlights)");
  auto print_top_words = [](const char* role, const TextAttribution& t) {
    std::vector<std::size_t> order(t.words.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return t.importance[a] > t.importance[b]; });
    std::printf("%s (width_used=%d):", role, t.width_used);
    for (std::size_t i = 0; i < std::min<std::size_t>(3, order.size()); ++i) {
      std::printf(" %s=%.4f", t.words[order[i]].c_str(), t.importance[order[i]]);
    }
    std::printf("\n");
  };
  print_top_words("description", map.description);
  print_top_words("prediction", map.prediction);
  std::printf("heatmap written to %s, sidecar to %s\n", out_png.c_str(), out_json.c_str());
  return kExitOk;
}

int cmd_cache(RunConfig& run, const std::string& action, bool yes) {
  if (run.cache_dir.empty()) {
    std::fprintf(stderr, "error: cache command needs --cache-dir or ZSFUSE_CACHE_DIR\n");
    return kExitUsage;
  }
  CacheStore store(run.cache_dir);
  if (action == "stats") {
    const CacheStats stats = store.stats();
    std::printf("entries=%llu bytes=%llu\n", static_cast<unsigned long long>(stats.entries),
                static_cast<unsigned long long>(stats.value_bytes));
    for (const auto& [backend, count] : stats.entries_by_backend) {
      std::printf("  %-40s %llu\n", backend.c_str(), static_cast<unsigned long long>(count));
    }
    return kExitOk;
  }
  if (action == "verify") {
    const auto corrupt = store.verify();
    if (corrupt.empty()) {
      std::printf("cache ok (%llu entries)\n",
                  static_cast<unsigned long long>(store.stats().entries));
      return kExitOk;
    }
    for (const auto& key : corrupt) {
      std::printf("corrupt: %s\n", key.c_str());
    }
    std::fprintf(stderr, "error: %zu corrupt cache entries\n", corrupt.size());
    return kExitRuntime;
  }
  if (action == "clear") {
    if (!yes) {
      std::fprintf(stderr, "refusing to clear cache without --yes\n");
      return kExitUsage;
    }
    std::printf("removed %llu entries\n", static_cast<unsigned long long>(store.clear()));
    return kExitOk;
  }
  std::fprintf(stderr, "error: unknown cache action '%s' (stats, verify, clear)\n",
               action.c_str());
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zsfuse: zero-shot image classification with LLM-augmented feature fusion"};
  app.fallthrough();
  app.require_subcommand(1);

  RunConfig run;
  app.add_option("--backend", run.backend, "Backend kind: auto, mock, http")
      ->check(CLI::IsMember({"auto", "mock", "http"}));
  app.add_option("--encoder-url", run.encoder_url, "Encoder service endpoint")
      ->envname("ZSFUSE_ENCODER_URL");
  app.add_option("--llm-url", run.llm_url, "LLM service endpoint")->envname("ZSFUSE_LLM_URL");
  app.add_option("--api-key", run.api_key, "Bearer token for both services")
      ->envname("ZSFUSE_API_KEY");
  app.add_option("--cache-dir", run.cache_dir, "Content-addressed response cache directory")
      ->envname("ZSFUSE_CACHE_DIR");
  app.add_flag("--no-cache", run.no_cache, "Disable the response cache");
  app.add_option("--seed", run.seed, "Mock backend seed");
  app.add_option("--mock-dim", run.mock_dim, "Mock encoder embedding dim");
  app.add_option("--parallelism", run.parallelism, "Max in-flight backend requests");
  app.add_flag("--verbose", run.verbose, "Print config resolution");

  // build
  auto* build = app.add_subcommand("build", "Build a zero-shot classifier model");
  std::string labels_path, manifest_path, mode_name = "labels", template_pattern,
              dataset_template, out_path = "model.zsf";
  int k = kDefaultDescriptionSamples;
  build->add_option("--labels", labels_path, "Text file with one class label per line");
  build->add_option("--manifest", manifest_path, "Dataset manifest JSON");
  build->add_option("--mode", mode_name, "labels, template, descriptions, combined")
      ->check(CLI::IsMember({"labels", "template", "descriptions", "combined"}));
  build->add_option("--template", template_pattern, "Label template with {class_label}");
  build->add_option("--dataset-template", dataset_template,
                    "Named template override: pets, dtd, cars");
  build->add_option("--k", k, "LLM class descriptions per label (multiple of 5)");
  build->add_option("--out", out_path, "Output model path");

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "Classify one image");
  std::string image_path, model_path, features = "if,df,pf", strategy = "avg-feature";
  bool degraded = false, as_json = false;
  classify_cmd->add_option("--image", image_path, "Input image")->required();
  classify_cmd->add_option("--model", model_path, "Classifier model file")->required();
  classify_cmd->add_option("--features", features, "Comma list of if, df, pf");
  classify_cmd->add_option("--strategy", strategy,
                           "avg-feature, avg-similarity, max-similarity");
  classify_cmd->add_flag("--degraded", degraded, "Skip failed optional features");
  classify_cmd->add_flag("--json", as_json, "Emit the prediction as JSON");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate over a dataset manifest");
  std::string eval_manifest, eval_model, eval_features = "if,df,pf",
              eval_strategy = "avg-feature", baseline, out_json = "report.json",
              out_csv = "report.csv";
  bool eval_degraded = false;
  double failure_fraction = 0.01;
  evaluate_cmd->add_option("--manifest", eval_manifest, "Dataset manifest JSON")->required();
  evaluate_cmd->add_option("--model", eval_model, "Classifier model file");
  evaluate_cmd->add_option("--features", eval_features, "Comma list of if, df, pf");
  evaluate_cmd->add_option("--strategy", eval_strategy,
                           "avg-feature, avg-similarity, max-similarity");
  evaluate_cmd->add_option("--baseline", baseline,
                           "Text-match baseline instead of the pipeline: rouge1, rougeL, embed");
  evaluate_cmd->add_flag("--degraded", eval_degraded, "Skip failed optional features");
  evaluate_cmd->add_option("--failure-fraction", failure_fraction,
                           "Max tolerated fraction of failed records");
  evaluate_cmd->add_option("--out-json", out_json, "Report JSON path");
  evaluate_cmd->add_option("--out-csv", out_csv, "Report CSV path");

  // attribute
  auto* attribute_cmd = app.add_subcommand("attribute", "Occlusion attribution for one image");
  std::string attr_image, attr_model, attr_png = "heatmap.png", attr_json = "heatmap.json";
  int kernel = 50, stride = 10, growth = 50, max_kernel = 200;
  int text_width = 3, min_text_width = 1;
  double threshold = 0.01;
  attribute_cmd->add_option("--image", attr_image, "Input image")->required();
  attribute_cmd->add_option("--model", attr_model, "Classifier model file")->required();
  attribute_cmd->add_option("--kernel", kernel, "Starting mask kernel (px)");
  attribute_cmd->add_option("--stride", stride, "Mask stride (px)");
  attribute_cmd->add_option("--growth", growth, "Kernel growth per escalation (px)");
  attribute_cmd->add_option("--max-kernel", max_kernel, "Kernel escalation limit (px)");
  attribute_cmd->add_option("--text-width", text_width, "Starting word-window width");
  attribute_cmd->add_option("--min-text-width", min_text_width, "Word-window floor");
  attribute_cmd->add_option("--threshold", threshold, "Highlight threshold (score drop)");
  attribute_cmd->add_option("--out-png", attr_png, "Heatmap output path");
  attribute_cmd->add_option("--out-json", attr_json, "Sidecar JSON output path");

  // cache
  auto* cache_cmd = app.add_subcommand("cache", "Inspect or manage the response cache");
  std::string cache_action;
  bool yes = false;
  cache_cmd->add_option("action", cache_action, "stats, verify, clear")->required();
  cache_cmd->add_flag("--yes", yes, "Confirm destructive actions");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      return cmd_build(run, labels_path, manifest_path, mode_name, template_pattern,
                       dataset_template, k, out_path);
    }
    if (classify_cmd->parsed()) {
      return cmd_classify(run, image_path, model_path, features, strategy, degraded, as_json);
    }
    if (evaluate_cmd->parsed()) {
      return cmd_evaluate(run, eval_manifest, eval_model, eval_features, eval_strategy, baseline,
                          eval_degraded, failure_fraction, out_json, out_csv);
    }
    if (attribute_cmd->parsed()) {
      return cmd_attribute(run, attr_image, attr_model, kernel, stride, growth, max_kernel,
                           text_width, min_text_width, threshold, attr_png, attr_json);
    }
    if (cache_cmd->parsed()) {
      return cmd_cache(run, cache_action, yes);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
