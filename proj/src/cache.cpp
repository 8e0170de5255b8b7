#include "zsfuse/cache.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>

#include "json.hpp"
#include "zsfuse/digest.hpp"

namespace zsfuse {

namespace {

using nlohmann::json;

constexpr char kEmbeddingMagic[4] = {'Z', 'S', 'E', '1'};

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace

Bytes encode_embedding_bytes(const EmbeddingVector& v) {
  Bytes out;
  out.reserve(4 + 4 + v.dim() * 8);
  out.insert(out.end(), kEmbeddingMagic, kEmbeddingMagic + 4);
  const std::uint32_t dim = static_cast<std::uint32_t>(v.dim());
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((dim >> (8 * i)) & 0xff));
  }
  for (double x : v.values()) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) {
      out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    }
  }
  return out;
}

EmbeddingVector decode_embedding_bytes(std::span<const std::uint8_t> data) {
  if (data.size() < 8 || std::memcmp(data.data(), kEmbeddingMagic, 4) != 0) {
    raise(Errc::StoreCorrupt, "embedding blob header mismatch");
  }
  std::uint32_t dim = 0;
  for (int i = 0; i < 4; ++i) {
    dim |= static_cast<std::uint32_t>(data[4 + i]) << (8 * i);
  }
  if (dim == 0 || data.size() != 8 + static_cast<std::size_t>(dim) * 8) {
    raise(Errc::StoreCorrupt, "embedding blob size mismatch");
  }
  std::vector<double> values(dim);
  for (std::uint32_t j = 0; j < dim; ++j) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(data[8 + j * 8 + i]) << (8 * i);
    }
    values[j] = std::bit_cast<double>(bits);
  }
  return EmbeddingVector(std::move(values));
}

std::string cache_key(const std::string& backend_identity, const std::string& operation,
                      std::span<const std::uint8_t> request) {
  Sha256 h;
  h.update(backend_identity);
  h.update(std::string_view("\n", 1));
  h.update(operation);
  h.update(std::string_view("\n", 1));
  h.update(request);
  return hex(h.finish());
}

CacheStore::CacheStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path CacheStore::entry_path(const std::string& key, const char* ext) const {
  return dir_ / key.substr(0, 2) / (key + ext);
}

bool CacheStore::contains(const std::string& key) const {
  return std::filesystem::exists(entry_path(key, ".bin")) &&
         std::filesystem::exists(entry_path(key, ".meta"));
}

std::optional<Bytes> CacheStore::get(const std::string& key) {
  const auto bin = entry_path(key, ".bin");
  const auto meta = entry_path(key, ".meta");
  std::error_code ec;
  if (!std::filesystem::exists(bin, ec) || !std::filesystem::exists(meta, ec)) {
    return std::nullopt;
  }
  Bytes value;
  std::string expected;
  try {
    value = read_file(bin);
    const json m = json::parse(to_string(read_file(meta)));
    expected = m.value("value_sha256", "");
  } catch (const std::exception&) {
    expected.clear();
  }
  if (expected.empty() || sha256_hex(value) != expected) {
    // StoreCorrupt: drop the entry so the caller refetches from the delegate.
    std::filesystem::remove(bin, ec);
    std::filesystem::remove(meta, ec);
    return std::nullopt;
  }
  return value;
}

void CacheStore::put(const std::string& key, std::span<const std::uint8_t> value,
                     const std::string& backend, const std::string& operation) {
  if (contains(key)) {
    return;  // concurrent miss already persisted; keep the winner
  }
  const auto bin = entry_path(key, ".bin");
  std::filesystem::create_directories(bin.parent_path());
  atomic_write_file(bin, value);
  const json meta = {
      {"backend", backend},
      {"operation", operation},
      {"created_at", iso8601_now()},
      {"value_sha256", sha256_hex(value)},
  };
  const std::string meta_text = meta.dump();
  atomic_write_file(entry_path(key, ".meta"),
                    std::span<const std::uint8_t>(
                        reinterpret_cast<const std::uint8_t*>(meta_text.data()), meta_text.size()));
}

CacheStats CacheStore::stats() const {
  CacheStats out;
  if (!std::filesystem::exists(dir_)) {
    return out;
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".bin") {
      continue;
    }
    out.entries += 1;
    out.value_bytes += entry.file_size();
    const auto meta_path = entry.path().parent_path() / (entry.path().stem().string() + ".meta");
    std::string backend = "(unknown)";
    try {
      const json m = json::parse(to_string(read_file(meta_path)));
      backend = m.value("backend", backend);
    } catch (const std::exception&) {
    }
    out.entries_by_backend[backend] += 1;
  }
  return out;
}

std::vector<std::string> CacheStore::verify() const {
  std::vector<std::string> corrupt;
  if (!std::filesystem::exists(dir_)) {
    return corrupt;
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".bin") {
      continue;
    }
    const std::string key = entry.path().stem().string();
    const auto meta_path = entry.path().parent_path() / (key + ".meta");
    std::string expected;
    try {
      const json m = json::parse(to_string(read_file(meta_path)));
      expected = m.value("value_sha256", "");
    } catch (const std::exception&) {
    }
    bool ok = !expected.empty();
    if (ok) {
      try {
        ok = sha256_hex(read_file(entry.path())) == expected;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      corrupt.push_back(key);
    }
  }
  return corrupt;
}

std::uint64_t CacheStore::clear() {
  std::uint64_t removed = 0;
  if (!std::filesystem::exists(dir_)) {
    return removed;
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin") {
      removed += 1;
    }
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    std::filesystem::remove_all(entry.path());
  }
  return removed;
}

CachedEncoder::CachedEncoder(std::shared_ptr<EncoderBackend> delegate,
                             std::shared_ptr<CacheStore> store,
                             std::shared_ptr<CallCounters> counters)
    : delegate_(std::move(delegate)), store_(std::move(store)), counters_(std::move(counters)) {
  if (!counters_) {
    counters_ = std::make_shared<CallCounters>();
  }
}

EmbeddingVector CachedEncoder::cached_encode(const char* operation,
                                             std::span<const std::uint8_t> payload,
                                             std::atomic<std::uint64_t>& call_counter,
                                             const std::function<EmbeddingVector()>& compute) {
  auto note_dim = [this](const EmbeddingVector& v) {
    std::lock_guard<std::mutex> lock(mutex_);
    observed_dim_ = v.dim();
  };
  if (!store_) {
    call_counter.fetch_add(1);
    auto v = compute();
    note_dim(v);
    return v;
  }
  const std::string key = cache_key(delegate_->identity(), operation, payload);
  if (auto hit = store_->get(key)) {
    counters_->cache_hits.fetch_add(1);
    auto v = decode_embedding_bytes(*hit);
    note_dim(v);
    return v;
  }
  call_counter.fetch_add(1);
  auto v = compute();
  note_dim(v);
  if (auto raced = store_->get(key)) {
    return decode_embedding_bytes(*raced);  // a concurrent miss won; serve its entry
  }
  store_->put(key, encode_embedding_bytes(v), delegate_->identity(), operation);
  return v;
}

EmbeddingVector CachedEncoder::encode_text(std::string_view text) {
  const Bytes payload = to_bytes(text);
  return cached_encode("encode_text", payload, counters_->encode_text_calls,
                       [&] { return delegate_->encode_text(text); });
}

EmbeddingVector CachedEncoder::encode_image(const Bytes& image) {
  return cached_encode("encode_image", image, counters_->encode_image_calls,
                       [&] { return delegate_->encode_image(image); });
}

std::size_t CachedEncoder::dim() const {
  const std::size_t d = delegate_->dim();
  if (d != 0) {
    return d;
  }
  std::lock_guard<std::mutex> lock(mutex_);
  return observed_dim_;
}

CachedLLM::CachedLLM(std::shared_ptr<LLMBackend> delegate, std::shared_ptr<CacheStore> store,
                     std::shared_ptr<CallCounters> counters)
    : delegate_(std::move(delegate)), store_(std::move(store)), counters_(std::move(counters)) {
  if (!counters_) {
    counters_ = std::make_shared<CallCounters>();
  }
}

std::string CachedLLM::generate(std::string_view prompt, const std::optional<Bytes>& image,
                                double temperature) {
  check_temperature(temperature);
  if (!store_) {
    counters_->generate_calls.fetch_add(1);
    return delegate_->generate(prompt, image, temperature);
  }
  json request{{"prompt", std::string(prompt)}, {"temperature", temperature}};
  if (image) {
    request["image_b64"] = base64_encode(*image);
  }
  std::string canonical = request.dump();
  if (temperature > 0.0) {
    std::uint64_t ordinal = 0;
    {
      std::lock_guard<std::mutex> lock(ordinal_mutex_);
      ordinal = sample_ordinals_[canonical]++;
    }
    canonical += "#sample=" + std::to_string(ordinal);
  }
  const std::string key =
      cache_key(delegate_->identity(), "generate",
                std::span<const std::uint8_t>(
                    reinterpret_cast<const std::uint8_t*>(canonical.data()), canonical.size()));
  if (auto hit = store_->get(key)) {
    counters_->cache_hits.fetch_add(1);
    return to_string(*hit);
  }
  counters_->generate_calls.fetch_add(1);
  const std::string text = delegate_->generate(prompt, image, temperature);
  if (auto raced = store_->get(key)) {
    return to_string(*raced);
  }
  store_->put(key,
              std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                            text.size()),
              delegate_->identity(), "generate");
  return text;
}

}  // namespace zsfuse
