#include "zsfuse/mock_backend.hpp"

#include <cstdio>
#include <cstring>
#include <random>

#include "zsfuse/digest.hpp"

namespace zsfuse {

namespace {

std::uint64_t seed_from_digest(const Digest& d) {
  std::uint64_t s = 0;
  std::memcpy(&s, d.data(), sizeof(s));
  return s;
}

// Strictly inside (-1, 1); mapping is fixed by the standard's mt19937_64
// output, so values are identical across platforms.
double open_unit_value(std::mt19937_64& rng) {
  const std::uint64_t u = rng();
  const double x = (static_cast<double>(u >> 11) + 0.5) * 0x1p-53;
  return 2.0 * x - 1.0;
}

std::string temp_key(double temperature) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", temperature);
  return buf;
}

}  // namespace

MockEncoder::MockEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ == 0) {
    raise(Errc::InvalidArgument, "mock encoder dim must be >= 1");
  }
}

EmbeddingVector MockEncoder::from_digest(std::string_view domain,
                                         std::span<const std::uint8_t> payload) {
  Sha256 h;
  h.update(domain);
  h.update(std::to_string(seed_));
  h.update(":");
  h.update(payload);
  std::mt19937_64 rng(seed_from_digest(h.finish()));
  std::vector<double> values(dim_);
  for (auto& v : values) {
    v = open_unit_value(rng);
  }
  return normalize(EmbeddingVector(std::move(values)));
}

EmbeddingVector MockEncoder::encode_text(std::string_view text) {
  return from_digest("text:", to_bytes(text));
}

EmbeddingVector MockEncoder::encode_image(const Bytes& image) {
  return from_digest("image:", image);
}

std::string MockEncoder::identity() const {
  return "mock-encoder/dim=" + std::to_string(dim_) + "/seed=" + std::to_string(seed_);
}

MockLLM::MockLLM(std::uint64_t seed) : seed_(seed) {}

std::string MockLLM::request_digest(std::string_view prompt,
                                    const std::optional<Bytes>& image) const {
  Sha256 h;
  h.update(std::to_string(seed_));
  h.update(":");
  h.update(prompt);
  h.update(std::string_view("\0", 1));
  if (image) {
    h.update(*image);
  }
  return hex(h.finish());
}

void MockLLM::add_fixture(std::string_view prompt, const std::optional<Bytes>& image,
                          double temperature, std::string response) {
  check_temperature(temperature);
  std::lock_guard<std::mutex> lock(mutex_);
  fixtures_[request_digest(prompt, image) + "@" + temp_key(temperature)] = std::move(response);
}

std::string MockLLM::generate(std::string_view prompt, const std::optional<Bytes>& image,
                              double temperature) {
  check_temperature(temperature);
  const std::string digest = request_digest(prompt, image);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = fixtures_.find(digest + "@" + temp_key(temperature));
    if (it != fixtures_.end()) {
      return it->second;
    }
  }
  if (temperature == 0.0) {
    return "mock-response-" + digest.substr(0, 6);
  }
  // Nonzero temperature indexes an alternative deterministic variant.
  return "mock-response-" + sha256_hex(digest + "@" + temp_key(temperature)).substr(0, 6);
}

std::string MockLLM::identity() const { return "mock-llm/seed=" + std::to_string(seed_); }

void check_temperature(double temperature) {
  if (!(temperature >= 0.0 && temperature <= 1.0)) {
    raise(Errc::InvalidArgument, "temperature must be in [0, 1]");
  }
}

}  // namespace zsfuse
