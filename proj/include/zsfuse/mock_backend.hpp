#pragma once

#include <map>
#include <mutex>

#include "zsfuse/backends.hpp"

namespace zsfuse {

/// Deterministic offline encoder: the digest of the input bytes seeds a
/// pseudorandom generator that emits `dim` coordinates in (-1, 1), which are
/// then normalized. Same input, same unit vector — always.
class MockEncoder final : public EncoderBackend {
 public:
  explicit MockEncoder(std::size_t dim = 64, std::uint64_t seed = 0);

  EmbeddingVector encode_text(std::string_view text) override;
  EmbeddingVector encode_image(const Bytes& image) override;
  std::size_t dim() const override { return dim_; }
  std::string identity() const override;

 private:
  EmbeddingVector from_digest(std::string_view domain, std::span<const std::uint8_t> payload);

  std::size_t dim_;
  std::uint64_t seed_;
};

/// Deterministic offline LLM backed by a fixture table keyed on
/// digest(prompt || image). Unknown requests fall back to
/// "mock-response-<digest prefix>". Temperature selects fixture variants and
/// is otherwise ignored.
class MockLLM final : public LLMBackend {
 public:
  explicit MockLLM(std::uint64_t seed = 0);

  void add_fixture(std::string_view prompt, const std::optional<Bytes>& image, double temperature,
                   std::string response);

  std::string generate(std::string_view prompt, const std::optional<Bytes>& image,
                       double temperature) override;
  std::string identity() const override;

 private:
  std::string request_digest(std::string_view prompt, const std::optional<Bytes>& image) const;

  std::uint64_t seed_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> fixtures_;  // "<digest>@<temp>" -> response
};

}  // namespace zsfuse
