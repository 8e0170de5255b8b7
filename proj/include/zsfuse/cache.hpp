#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "zsfuse/backends.hpp"

namespace zsfuse {

struct CacheStats {
  std::uint64_t entries = 0;
  std::uint64_t value_bytes = 0;
  std::map<std::string, std::uint64_t> entries_by_backend;
};

/*
 * Content-addressed response store. Layout:
 *   {dir}/{first two key chars}/{key}.bin   response bytes
 *   {dir}/{first two key chars}/{key}.meta  JSON {backend, operation, created_at, value_sha256}
 * Keys are sha256 hex over (backend identity, operation, canonical request).
 * Writes go through write-temp-then-rename; a corrupt entry (value digest
 * disagreeing with its meta) is discarded on read so the caller refetches.
 */
class CacheStore {
 public:
  explicit CacheStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<Bytes> get(const std::string& key);
  void put(const std::string& key, std::span<const std::uint8_t> value,
           const std::string& backend, const std::string& operation);
  bool contains(const std::string& key) const;

  CacheStats stats() const;
  std::vector<std::string> verify() const;  // keys whose stored bytes fail their digest
  std::uint64_t clear();

 private:
  std::filesystem::path entry_path(const std::string& key, const char* ext) const;

  std::filesystem::path dir_;
};

std::string cache_key(const std::string& backend_identity, const std::string& operation,
                      std::span<const std::uint8_t> request);

/// Caching + call-counting encoder wrapper. Without a store it still counts
/// delegate calls, which keeps evaluation reports honest when caching is off.
class CachedEncoder final : public EncoderBackend {
 public:
  CachedEncoder(std::shared_ptr<EncoderBackend> delegate, std::shared_ptr<CacheStore> store,
                std::shared_ptr<CallCounters> counters);

  EmbeddingVector encode_text(std::string_view text) override;
  EmbeddingVector encode_image(const Bytes& image) override;
  std::size_t dim() const override;
  std::optional<std::size_t> max_text_units() const override { return delegate_->max_text_units(); }
  std::string identity() const override { return delegate_->identity(); }

 private:
  EmbeddingVector cached_encode(const char* operation, std::span<const std::uint8_t> payload,
                                std::atomic<std::uint64_t>& call_counter,
                                const std::function<EmbeddingVector()>& compute);

  std::shared_ptr<EncoderBackend> delegate_;
  std::shared_ptr<CacheStore> store_;
  std::shared_ptr<CallCounters> counters_;
  mutable std::mutex mutex_;
  std::size_t observed_dim_ = 0;
};

/// Caching + call-counting LLM wrapper. Deterministic (temperature 0)
/// requests are content-addressed outright. Sampled requests (temperature
/// > 0) additionally carry an in-run occurrence ordinal so that repeated
/// identical prompts keep their per-sample diversity on first run and replay
/// byte-identically on the next.
class CachedLLM final : public LLMBackend {
 public:
  CachedLLM(std::shared_ptr<LLMBackend> delegate, std::shared_ptr<CacheStore> store,
            std::shared_ptr<CallCounters> counters);

  std::string generate(std::string_view prompt, const std::optional<Bytes>& image,
                       double temperature) override;
  std::string identity() const override { return delegate_->identity(); }

 private:
  std::shared_ptr<LLMBackend> delegate_;
  std::shared_ptr<CacheStore> store_;
  std::shared_ptr<CallCounters> counters_;
  std::mutex ordinal_mutex_;
  std::map<std::string, std::uint64_t> sample_ordinals_;
};

// Cache value codec for embeddings: "ZSE1", u32 dim, dim * f64, little-endian.
Bytes encode_embedding_bytes(const EmbeddingVector& v);
EmbeddingVector decode_embedding_bytes(std::span<const std::uint8_t> data);

}  // namespace zsfuse
