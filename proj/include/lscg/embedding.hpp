#pragma once

// Frozen text encoders behind one provider interface, plus a persistent
// on-disk cache.
//
// Provider ids:
//   mock:ngram-v1[:DIM]   hashed character n-grams (default DIM 64), see below
//   remote:<model>        HTTP embedding API at $LSCG_EMBED_ENDPOINT
//   local:<path>          word-vector table file, mean-pooled per text
//
// mock:ngram-v1, exactly:
//   tokens  = lowercase alphanumeric runs of the text (the trimmed lowercase
//             text itself when there are none)
//   features per token t: "w:" + t, and "g:" + every 3-byte window of
//             "<" + t + ">"
//   each feature f adds s to slot h % DIM, where h = FNV-1a-64(f) and
//             s = -1 if the top bit of h is set, else +1
//   the slot vector (double) is L2-normalized and stored as float32; an
//   all-zero vector becomes the unit vector e_0.

#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "lscg/errors.hpp"
#include "lscg/http.hpp"
#include "lscg/log.hpp"
#include "lscg/rng.hpp"
#include "lscg/text.hpp"

namespace lscg::embed {

namespace fs = std::filesystem;

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool finite() const {
    for (float v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool operator==(const EmbeddingVector&) const = default;
};

struct ProviderDescriptor {
  std::string provider_id;
  std::size_t dim = 0;
  std::map<std::string, std::string> config;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const ProviderDescriptor& descriptor() const = 0;
  /// One vector per text, in order. Must be safe for concurrent calls.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const = 0;
};

// ---------------------------------------------------------------- mock

class MockNgramProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDim = 64;

  explicit MockNgramProvider(std::size_t dim = kDefaultDim) {
    if (dim == 0) throw std::invalid_argument("mock provider: dim must be positive");
    desc_.dim = dim;
    desc_.provider_id = dim == kDefaultDim ? "mock:ngram-v1" : "mock:ngram-v1:" + std::to_string(dim);
  }

  const ProviderDescriptor& descriptor() const override { return desc_; }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  EmbeddingVector embed_one(std::string_view text) const {
    auto tokens = text::tokenize(text);
    if (tokens.empty()) {
      std::string whole = text::normalize_word(text);
      if (whole.empty()) throw std::invalid_argument("mock provider: empty text");
      tokens.push_back(std::move(whole));
    }
    std::vector<double> acc(desc_.dim, 0.0);
    auto add = [&](std::string_view feature) {
      std::uint64_t h = fnv1a64(feature);
      acc[h % desc_.dim] += (h >> 63) ? -1.0 : 1.0;
    };
    std::string buf;
    for (const auto& t : tokens) {
      buf = "w:" + t;
      add(buf);
      std::string padded = "<" + t + ">";
      for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        buf = "g:" + padded.substr(i, 3);
        add(buf);
      }
    }
    double norm = 0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    EmbeddingVector e;
    e.values.resize(desc_.dim);
    if (norm == 0) {
      e.values[0] = 1.0f;
      return e;
    }
    for (std::size_t i = 0; i < desc_.dim; ++i) e.values[i] = static_cast<float>(acc[i] / norm);
    return e;
  }

 private:
  ProviderDescriptor desc_;
};

// ---------------------------------------------------------------- remote

inline void check_vectors(const std::vector<EmbeddingVector>& v, std::size_t expected_count,
                          std::size_t dim, const std::string& who) {
  if (v.size() != expected_count)
    throw IntegrityError(who + ": expected " + std::to_string(expected_count) + " vectors, got " +
                         std::to_string(v.size()));
  for (const auto& e : v) {
    if (e.dim() != dim)
      throw IntegrityError(who + ": dimension mismatch (expected " + std::to_string(dim) +
                           ", got " + std::to_string(e.dim()) + ")");
    if (!e.finite()) throw IntegrityError(who + ": non-finite embedding value");
  }
}

/// Embedding HTTP API. Request `{"input": [texts], "model": id}`; the response
/// is either an array of float arrays or an OpenAI-style `{"data": [{"embedding": [...]}]}`.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(std::string model, std::size_t dim, std::string endpoint,
                          std::string api_key = {}, http::RetryPolicy retry = {},
                          std::size_t max_batch = 64)
      : model_(std::move(model)),
        endpoint_(std::move(endpoint)),
        api_key_(std::move(api_key)),
        retry_(std::move(retry)),
        max_batch_(max_batch) {
    if (endpoint_.empty()) throw std::invalid_argument("remote provider: no endpoint configured");
    desc_.provider_id = "remote:" + model_;
    desc_.dim = dim;
    desc_.config["endpoint"] = endpoint_;
  }

  const ProviderDescriptor& descriptor() const override { return desc_; }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += max_batch_) {
      auto chunk = texts.subspan(start, std::min(max_batch_, texts.size() - start));
      auto part = request(chunk);
      check_vectors(part, chunk.size(), desc_.dim, desc_.provider_id);
      out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
  }

  static std::vector<EmbeddingVector> parse_response(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw IntegrityError("embedding response is not JSON");
    const nlohmann::json* arr = &j;
    nlohmann::json rows = nlohmann::json::array();
    if (j.is_object() && j.contains("data")) {
      std::vector<std::pair<long, nlohmann::json>> indexed;
      long pos = 0;
      for (const auto& item : j["data"]) indexed.emplace_back(item.value("index", pos++), item.at("embedding"));
      std::stable_sort(indexed.begin(), indexed.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      for (auto& [i, e] : indexed) rows.push_back(std::move(e));
      arr = &rows;
    }
    if (!arr->is_array()) throw IntegrityError("embedding response has no vector array");
    std::vector<EmbeddingVector> out;
    for (const auto& row : *arr) {
      if (!row.is_array()) throw IntegrityError("embedding row is not an array");
      EmbeddingVector e;
      for (const auto& v : row) {
        if (!v.is_number()) throw IntegrityError("embedding value is not a number");
        e.values.push_back(v.get<float>());
      }
      out.push_back(std::move(e));
    }
    return out;
  }

 private:
  std::vector<EmbeddingVector> request(std::span<const std::string> texts) const {
    nlohmann::json body;
    body["input"] = std::vector<std::string>(texts.begin(), texts.end());
    body["model"] = model_;
    auto res = http::post_json(endpoint_, body.dump(), api_key_, retry_);
    if (res.status < 200 || res.status >= 300)
      throw TransportError("embedding endpoint returned HTTP " + std::to_string(res.status));
    return parse_response(res.body);
  }

  ProviderDescriptor desc_;
  std::string model_;
  std::string endpoint_;
  std::string api_key_;
  http::RetryPolicy retry_;
  std::size_t max_batch_;
};

// ---------------------------------------------------------------- local

/// Generic local inference: text in, vector out.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<float> run(std::string_view text) const = 0;
};

/// Word-vector table (word2vec/GloVe text format); a text is the L2-normalized
/// mean of its known token vectors.
class StaticTableBackend final : public InferenceBackend {
 public:
  explicit StaticTableBackend(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding table " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      std::istringstream is(line);
      std::string word;
      if (!(is >> word)) continue;
      std::vector<float> v;
      float x;
      while (is >> x) v.push_back(x);
      if (n == 1 && v.size() == 1) continue;  // "count dim" header
      if (dim_ == 0) dim_ = v.size();
      if (v.size() != dim_ || dim_ == 0)
        throw DataError(path.string() + ":" + std::to_string(n) + ": inconsistent vector length");
      table_[text::to_lower(word)] = std::move(v);
    }
    if (table_.empty()) throw DataError("embedding table " + path.string() + " is empty");
  }

  std::size_t dim() const override { return dim_; }

  std::vector<float> run(std::string_view text) const override {
    std::vector<double> acc(dim_, 0.0);
    std::size_t hits = 0;
    for (const auto& t : text::tokenize(text)) {
      auto it = table_.find(t);
      if (it == table_.end()) continue;
      ++hits;
      for (std::size_t i = 0; i < dim_; ++i) acc[i] += it->second[i];
    }
    if (hits == 0) throw IntegrityError("no known tokens in text '" + std::string(text) + "'");
    double norm = 0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<float> out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(norm > 0 ? acc[i] / norm : 0.0);
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> table_;
};

class LocalModelProvider final : public EmbeddingProvider {
 public:
  LocalModelProvider(std::string model_path, std::shared_ptr<const InferenceBackend> backend)
      : backend_(std::move(backend)) {
    desc_.provider_id = "local:" + model_path;
    desc_.dim = backend_->dim();
    desc_.config["path"] = model_path;
  }

  const ProviderDescriptor& descriptor() const override { return desc_; }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back({backend_->run(t)});
    return out;
  }

 private:
  ProviderDescriptor desc_;
  std::shared_ptr<const InferenceBackend> backend_;
};

struct ProviderOptions {
  std::string endpoint;     // remote; defaults to $LSCG_EMBED_ENDPOINT
  std::string api_key;      // remote; defaults to $LSCG_EMBED_API_KEY
  std::size_t remote_dim = 768;
  http::RetryPolicy retry{};
};

inline std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

inline std::shared_ptr<const EmbeddingProvider> make_provider(const std::string& id,
                                                              ProviderOptions opt = {}) {
  if (id == "mock:ngram-v1") return std::make_shared<MockNgramProvider>();
  if (id.rfind("mock:ngram-v1:", 0) == 0) {
    std::size_t dim = std::stoul(id.substr(std::string("mock:ngram-v1:").size()));
    return std::make_shared<MockNgramProvider>(dim);
  }
  if (id.rfind("remote:", 0) == 0) {
    std::string endpoint = opt.endpoint.empty() ? env_or("LSCG_EMBED_ENDPOINT", "") : opt.endpoint;
    std::string key = opt.api_key.empty() ? env_or("LSCG_EMBED_API_KEY", "") : opt.api_key;
    return std::make_shared<RemoteEmbeddingProvider>(id.substr(7), opt.remote_dim, endpoint, key,
                                                     opt.retry);
  }
  if (id.rfind("local:", 0) == 0) {
    std::string path = id.substr(6);
    return std::make_shared<LocalModelProvider>(path, std::make_shared<StaticTableBackend>(path));
  }
  throw std::invalid_argument("unknown embedding provider '" + id + "'");
}

// ---------------------------------------------------------------- cache

/// One file per (provider_id, text) under `<dir>/<xx>/<key>.emb`.
///
/// File layout (little-endian): "LSCGEMB1", u32 len + provider_id, u32 dim,
/// u32 count, u32 len + text, then count*dim float32. Writers go through a
/// temp file and an atomic rename, so readers never observe a partial entry.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  const fs::path& dir() const { return dir_; }

  static std::string key(std::string_view provider_id, std::string_view text) {
    std::string joined(provider_id);
    joined += '\x1f';
    joined += text;
    std::uint64_t a = fnv1a64(joined);
    std::uint64_t b = fnv1a64(joined, 0x84222325cbf29ce4ULL);
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(a),
                  static_cast<unsigned long long>(b));
    return buf;
  }

  fs::path path_for(std::string_view provider_id, std::string_view text) const {
    std::string k = key(provider_id, text);
    return dir_ / k.substr(0, 2) / (k + ".emb");
  }

  std::optional<EmbeddingVector> get(std::string_view provider_id, std::string_view text) const {
    fs::path p = path_for(provider_id, text);
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto v = decode(bytes, provider_id, text);
    if (!v) log::warn("corrupt embedding cache entry " + p.string() + " treated as miss");
    return v;
  }

  void put(std::string_view provider_id, std::string_view text, const EmbeddingVector& v) const {
    fs::path p = path_for(provider_id, text);
    fs::create_directories(p.parent_path());
    static std::atomic<std::uint64_t> counter{0};
    std::ostringstream tmp_name;
    tmp_name << p.filename().string() << ".tmp." << ::getpid() << '.'
             << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << counter++;
    fs::path tmp = p.parent_path() / tmp_name.str();
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw DataError("cannot write cache entry " + tmp.string());
      std::string bytes = encode(provider_id, text, v);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw DataError("short write to " + tmp.string());
    }
    fs::rename(tmp, p);
  }

  static std::string encode(std::string_view provider_id, std::string_view text,
                            const EmbeddingVector& v) {
    std::string out = "LSCGEMB1";
    put_u32(out, static_cast<std::uint32_t>(provider_id.size()));
    out += provider_id;
    put_u32(out, static_cast<std::uint32_t>(v.dim()));
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (float f : v.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
  }

  static std::optional<EmbeddingVector> decode(std::string_view bytes, std::string_view provider_id,
                                               std::string_view text) {
    std::size_t pos = 0;
    auto take = [&](std::size_t n) -> std::optional<std::string_view> {
      if (bytes.size() - pos < n) return std::nullopt;
      auto s = bytes.substr(pos, n);
      pos += n;
      return s;
    };
    auto u32 = [&]() -> std::optional<std::uint32_t> {
      auto s = take(4);
      if (!s) return std::nullopt;
      std::uint32_t x = 0;
      for (int i = 3; i >= 0; --i) x = (x << 8) | static_cast<unsigned char>((*s)[static_cast<std::size_t>(i)]);
      return x;
    };
    auto magic = take(8);
    if (!magic || *magic != "LSCGEMB1") return std::nullopt;
    auto plen = u32();
    if (!plen) return std::nullopt;
    auto pid = take(*plen);
    if (!pid || *pid != provider_id) return std::nullopt;
    auto dim = u32();
    auto count = u32();
    if (!dim || !count || *dim == 0 || *count != 1) return std::nullopt;
    auto tlen = u32();
    if (!tlen) return std::nullopt;
    auto t = take(*tlen);
    if (!t || *t != text) return std::nullopt;
    if (bytes.size() - pos != static_cast<std::size_t>(*dim) * 4) return std::nullopt;
    EmbeddingVector v;
    v.values.resize(*dim);
    for (std::uint32_t i = 0; i < *dim; ++i) v.values[i] = std::bit_cast<float>(*u32());
    if (!v.finite()) return std::nullopt;
    return v;
  }

 private:
  static void put_u32(std::string& out, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
  }

  fs::path dir_;
};

// ---------------------------------------------------------------- embedder

/// Provider + optional cache. The cache never changes returned values.
class Embedder {
 public:
  explicit Embedder(std::shared_ptr<const EmbeddingProvider> provider,
                    std::optional<EmbeddingCache> cache = std::nullopt)
      : provider_(std::move(provider)), cache_(std::move(cache)) {}

  const ProviderDescriptor& descriptor() const { return provider_->descriptor(); }
  const std::string& provider_id() const { return provider_->descriptor().provider_id; }
  std::size_t dim() const { return provider_->descriptor().dim; }

  EmbeddingVector embed_text(std::string_view text) const {
    return embed_batch(std::vector<std::string>{std::string(text)}).front();
  }

  /// Order-preserving; a provider failure fails the whole batch.
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::string> missing;
    std::unordered_map<std::string, std::vector<std::size_t>> slots;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (text::trim(texts[i]).empty()) throw std::invalid_argument("embed: empty text");
      if (cache_) {
        if (auto hit = cache_->get(provider_id(), texts[i])) {
          out[i] = std::move(*hit);
          ++hits_;
          continue;
        }
      }
      ++misses_;
      auto [it, fresh] = slots.try_emplace(texts[i]);
      if (fresh) missing.push_back(texts[i]);
      it->second.push_back(i);
    }
    if (missing.empty()) return out;
    auto computed = provider_->embed(missing);
    check_vectors(computed, missing.size(), dim(), provider_id());
    for (std::size_t m = 0; m < missing.size(); ++m) {
      if (cache_) cache_->put(provider_id(), missing[m], computed[m]);
      for (auto i : slots[missing[m]]) out[i] = computed[m];
    }
    return out;
  }

  std::uint64_t cache_hits() const { return hits_; }
  std::uint64_t cache_misses() const { return misses_; }

 private:
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::optional<EmbeddingCache> cache_;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
};

}  // namespace lscg::embed
