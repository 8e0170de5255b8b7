#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "zsfuse/bytes.hpp"
#include "zsfuse/embedding.hpp"

namespace zsfuse {

struct CounterSnapshot {
  std::uint64_t encode_text_calls = 0;
  std::uint64_t encode_image_calls = 0;
  std::uint64_t generate_calls = 0;
  std::uint64_t cache_hits = 0;

  std::uint64_t network_calls() const {
    return encode_text_calls + encode_image_calls + generate_calls;
  }
};

/// Monotone per-run counters of delegate (non-cache) backend invocations.
struct CallCounters {
  std::atomic<std::uint64_t> encode_text_calls{0};
  std::atomic<std::uint64_t> encode_image_calls{0};
  std::atomic<std::uint64_t> generate_calls{0};
  std::atomic<std::uint64_t> cache_hits{0};

  CounterSnapshot snapshot() const {
    return {encode_text_calls.load(), encode_image_calls.load(), generate_calls.load(),
            cache_hits.load()};
  }
};

/// Cross-modal embedding encoder pair (image encoder + text encoder sharing
/// one embedding space). Implementations must return vectors of a single
/// consistent dim with finite entries.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual EmbeddingVector encode_text(std::string_view text) = 0;
  virtual EmbeddingVector encode_image(const Bytes& image) = 0;

  /// Embedding dimensionality; 0 while still unknown (remote backends learn
  /// it from the first response).
  virtual std::size_t dim() const = 0;

  /// Optional text budget in bytes; longer inputs are truncated with a warning.
  virtual std::optional<std::size_t> max_text_units() const { return std::nullopt; }

  /// Stable identity string (model + endpoint + protocol revision); part of
  /// every cache key so switching models never replays stale vectors.
  virtual std::string identity() const = 0;
};

/// Multimodal LLM: text prompt plus optional image, temperature in [0, 1].
class LLMBackend {
 public:
  virtual ~LLMBackend() = default;

  virtual std::string generate(std::string_view prompt, const std::optional<Bytes>& image,
                               double temperature) = 0;
  virtual std::string identity() const = 0;
};

void check_temperature(double temperature);  // InvalidArgument outside [0, 1]

}  // namespace zsfuse
