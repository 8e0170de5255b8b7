#pragma once

#include <functional>
#include <memory>
#include <mutex>

#include "zsfuse/backends.hpp"

namespace zsfuse {

struct RetryPolicy {
  int max_attempts = 5;
  int base_delay_ms = 250;  // exponential, jittered
};

struct HttpBackendOptions {
  std::string endpoint;  // e.g. http://host:port or http://host:port/v1
  std::string api_key;   // sent as a bearer token when nonempty
  RetryPolicy retry;
  int timeout_sec = 120;
  std::function<void(const std::string&)> warn;  // defaults to stderr
};

/*
 * Wire protocol (UTF-8 JSON):
 *   POST {endpoint}/encode_text  {"text": "..."}
 *   POST {endpoint}/encode_image {"image_b64": "..."}
 *     -> {"embedding": [f64, ...], "dim": n}
 *   POST {endpoint}/generate     {"prompt": "...", "image_b64"?: "...", "temperature": f64}
 *     -> {"text": "..."}
 * Failures come back as {"error": {"code": "...", "message": "..."}}; the
 * code "safety_refusal" is surfaced as SafetyRefusal so callers can degrade.
 */
class HttpEncoder final : public EncoderBackend {
 public:
  HttpEncoder(HttpBackendOptions options, std::string model_name = "remote-encoder",
              std::optional<std::size_t> max_text_units = std::nullopt);
  ~HttpEncoder() override;

  EmbeddingVector encode_text(std::string_view text) override;
  EmbeddingVector encode_image(const Bytes& image) override;
  std::size_t dim() const override;  // 0 until the first response reports it
  std::optional<std::size_t> max_text_units() const override { return max_text_units_; }
  std::string identity() const override;

 private:
  EmbeddingVector parse_embedding(const std::string& body);

  HttpBackendOptions options_;
  std::string model_name_;
  std::optional<std::size_t> max_text_units_;
  mutable std::mutex mutex_;
  std::size_t dim_ = 0;
};

class HttpLLM final : public LLMBackend {
 public:
  HttpLLM(HttpBackendOptions options, std::string model_name = "remote-llm");
  ~HttpLLM() override;

  std::string generate(std::string_view prompt, const std::optional<Bytes>& image,
                       double temperature) override;
  std::string identity() const override;

 private:
  HttpBackendOptions options_;
  std::string model_name_;
};

}  // namespace zsfuse
