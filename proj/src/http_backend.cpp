#include "zsfuse/http_backend.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace zsfuse {

namespace {

using nlohmann::json;

struct Endpoint {
  std::string host;  // scheme://host:port
  std::string base;  // path prefix, no trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    raise(Errc::InvalidArgument, "endpoint must start with http:// or https://: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, ""};
  }
  std::string base = url.substr(path_start);
  while (!base.empty() && base.back() == '/') {
    base.pop_back();
  }
  return {url.substr(0, path_start), base};
}

void default_warn(const std::string& message) {
  std::fprintf(stderr, "[zsfuse] warning: %s\n", message.c_str());
}

void sleep_with_jitter(int base_ms, int attempt) {
  if (base_ms <= 0) {
    return;
  }
  thread_local std::mt19937 rng(std::random_device{}());
  std::uniform_real_distribution<double> jitter(0.5, 1.5);
  const double ms = static_cast<double>(base_ms) * static_cast<double>(1 << attempt) * jitter(rng);
  std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(ms)));
}

// POSTs JSON with retries on transport failures and 429/5xx. Service errors
// arrive as {"error": {"code", "message"}} and are mapped to typed errors.
std::string post_json(const HttpBackendOptions& options, const std::string& path,
                      const std::string& body) {
  const Endpoint ep = split_endpoint(options.endpoint);
  std::string last_failure = "no attempt made";

  for (int attempt = 0; attempt < std::max(1, options.retry.max_attempts); ++attempt) {
    if (attempt > 0) {
      sleep_with_jitter(options.retry.base_delay_ms, attempt - 1);
    }
    httplib::Client client(ep.host);
    client.set_connection_timeout(options.timeout_sec, 0);
    client.set_read_timeout(options.timeout_sec, 0);
    httplib::Headers headers;
    if (!options.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + options.api_key);
    }
    auto res = client.Post(ep.base + path, headers, body, "application/json");
    if (!res) {
      last_failure = "transport: " + httplib::to_string(res.error());
      continue;
    }

    json err_body;
    std::string err_code, err_message;
    if (!res->body.empty()) {
      err_body = json::parse(res->body, nullptr, false);
      if (err_body.is_object() && err_body.contains("error")) {
        const auto& e = err_body["error"];
        err_code = e.is_object() ? e.value("code", "") : "";
        err_message = e.is_object() ? e.value("message", e.dump()) : e.dump();
      }
    }
    if (err_code == "safety_refusal") {
      raise(Errc::SafetyRefusal, err_message.empty() ? "llm declined the request" : err_message);
    }
    if (res->status == 200) {
      if (!err_code.empty() || (err_body.is_object() && err_body.contains("error"))) {
        raise(Errc::Remote, "service reported failure: " + err_message);
      }
      return res->body;
    }
    if (res->status == 429 || res->status >= 500) {
      last_failure = "status " + std::to_string(res->status);
      continue;  // transient
    }
    raise(Errc::Remote, "status " + std::to_string(res->status) +
                            (err_message.empty() ? "" : ": " + err_message));
  }
  raise(Errc::Transport, "request to " + options.endpoint + path + " failed after " +
                             std::to_string(options.retry.max_attempts) +
                             " attempts (" + last_failure + ")");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

HttpEncoder::HttpEncoder(HttpBackendOptions options, std::string model_name,
                         std::optional<std::size_t> max_text_units)
    : options_(std::move(options)),
      model_name_(std::move(model_name)),
      max_text_units_(max_text_units) {
  if (!options_.warn) {
    options_.warn = default_warn;
  }
  split_endpoint(options_.endpoint);  // validate eagerly
}

HttpEncoder::~HttpEncoder() = default;

EmbeddingVector HttpEncoder::parse_embedding(const std::string& body) {
  const json parsed = json::parse(body, nullptr, false);
  if (!parsed.is_object() || !parsed.contains("embedding") || !parsed.contains("dim") ||
      !parsed["embedding"].is_array()) {
    raise(Errc::Protocol, "encoder response missing embedding/dim");
  }
  std::vector<double> values;
  values.reserve(parsed["embedding"].size());
  for (const auto& v : parsed["embedding"]) {
    if (!v.is_number()) {
      raise(Errc::Protocol, "non-numeric embedding entry");
    }
    values.push_back(v.get<double>());
  }
  if (parsed["dim"].get<std::size_t>() != values.size() || values.empty()) {
    raise(Errc::Protocol, "encoder response dim disagrees with embedding length");
  }
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (dim_ == 0) {
      dim_ = values.size();
    } else if (dim_ != values.size()) {
      raise(Errc::Protocol, "encoder dim changed mid-run: " + std::to_string(dim_) + " -> " +
                                std::to_string(values.size()));
    }
  }
  return EmbeddingVector(std::move(values));  // boundary validation: finite, dim >= 1
}

EmbeddingVector HttpEncoder::encode_text(std::string_view text) {
  if (trim(text).empty()) {
    raise(Errc::TooShort, "encoder text is empty after trimming");
  }
  std::string payload(text);
  if (max_text_units_ && payload.size() > *max_text_units_) {
    payload.resize(*max_text_units_);
    options_.warn("encoder text truncated to " + std::to_string(*max_text_units_) + " bytes");
  }
  const std::string body = json{{"text", payload}}.dump();
  return parse_embedding(post_json(options_, "/encode_text", body));
}

EmbeddingVector HttpEncoder::encode_image(const Bytes& image) {
  if (image.empty()) {
    raise(Errc::TooShort, "encoder image payload is empty");
  }
  const std::string body = json{{"image_b64", base64_encode(image)}}.dump();
  return parse_embedding(post_json(options_, "/encode_image", body));
}

std::size_t HttpEncoder::dim() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return dim_;
}

std::string HttpEncoder::identity() const {
  return model_name_ + "@" + options_.endpoint + "/wire-v1";
}

HttpLLM::HttpLLM(HttpBackendOptions options, std::string model_name)
    : options_(std::move(options)), model_name_(std::move(model_name)) {
  if (!options_.warn) {
    options_.warn = default_warn;
  }
  split_endpoint(options_.endpoint);
}

HttpLLM::~HttpLLM() = default;

std::string HttpLLM::generate(std::string_view prompt, const std::optional<Bytes>& image,
                              double temperature) {
  check_temperature(temperature);  // before any network call
  if (trim(prompt).empty()) {
    raise(Errc::TooShort, "llm prompt is empty after trimming");
  }
  json body{{"prompt", std::string(prompt)}, {"temperature", temperature}};
  if (image) {
    if (image->empty()) {
      raise(Errc::InvalidArgument, "llm image payload is empty");
    }
    body["image_b64"] = base64_encode(*image);
  }
  const std::string response = post_json(options_, "/generate", body.dump());
  const json parsed = json::parse(response, nullptr, false);
  if (!parsed.is_object() || !parsed.contains("text") || !parsed["text"].is_string()) {
    raise(Errc::Protocol, "llm response missing text");
  }
  const std::string text = parsed["text"].get<std::string>();
  if (text.empty()) {
    raise(Errc::Protocol, "llm returned empty text");
  }
  return text;
}

std::string HttpLLM::identity() const { return model_name_ + "@" + options_.endpoint + "/wire-v1"; }

}  // namespace zsfuse
