#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <set>

#include "lscg/embedding.hpp"
#include "support/fixtures.hpp"

namespace lscg {
namespace {

using embed::EmbeddingVector;
using testing::TempDir;
namespace fs = std::filesystem;

// Second implementation of the mock encoder, written from its documented description.
std::vector<float> reference_mock(const std::string& text, std::size_t dim) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u) && u < 128) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  if (tokens.empty()) {
    std::string t = text;
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    tokens.push_back(t);
  }
  std::vector<double> acc(dim, 0.0);
  auto add = [&](const std::string& f) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : f) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
  };
  for (const auto& t : tokens) {
    add("w:" + t);
    std::string b = "<" + t + ">";
    for (std::size_t i = 0; i + 3 <= b.size(); ++i) add("g:" + b.substr(i, 3));
  }
  double n = 0;
  for (double v : acc) n += v * v;
  std::vector<float> out(dim, 0.0f);
  if (n == 0) {
    out[0] = 1.0f;
    return out;
  }
  n = std::sqrt(n);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / n);
  return out;
}

std::vector<std::string> sample_texts() {
  return {"The athlete skied a snowy mountain", "ski", "snow", "restroom", "A", "!!!", "Ice cream, please.",
          "dressed my dog up as a pirate .", "x1 y2 z3", "   padded   ", "MiXeD CaSe"};
}

TEST(MockProvider, MatchesDocumentedAlgorithm) {
  for (std::size_t dim : {64u, 128u, 7u}) {
    embed::MockNgramProvider p(dim);
    auto texts = sample_texts();
    auto got = p.embed(texts);
    for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(got[i].values, reference_mock(texts[i], dim)) << texts[i];
  }
  EXPECT_EQ(embed::MockNgramProvider().descriptor().provider_id, "mock:ngram-v1");
  EXPECT_EQ(embed::MockNgramProvider(256).descriptor().provider_id, "mock:ngram-v1:256");
}

TEST(MockProvider, UnitNormAndDeterministic) {
  embed::MockNgramProvider p;
  for (const auto& t : sample_texts()) {
    auto a = p.embed_one(t), b = p.embed_one(t);
    EXPECT_EQ(a, b);
    double n = 0;
    for (float v : a.values) n += static_cast<double>(v) * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    EXPECT_EQ(a.dim(), 64u);
  }
}

TEST(MakeProvider, ParsesIds) {
  EXPECT_EQ(embed::make_provider("mock:ngram-v1")->descriptor().dim, 64u);
  EXPECT_EQ(embed::make_provider("mock:ngram-v1:32")->descriptor().dim, 32u);
  EXPECT_THROW(embed::make_provider("bogus"), std::invalid_argument);
  embed::ProviderOptions o;
  o.endpoint = "http://127.0.0.1:1/v1/embeddings";
  o.remote_dim = 3;
  auto r = embed::make_provider("remote:enc", o);
  EXPECT_EQ(r->descriptor().provider_id, "remote:enc");
  EXPECT_EQ(r->descriptor().dim, 3u);
}

TEST(Embedder, BatchEqualsSequentialAndPreservesOrder) {
  embed::Embedder em(std::make_shared<embed::MockNgramProvider>());
  std::vector<std::string> texts;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) texts.push_back("sentence " + std::to_string(rng.index(400)) + " words");
  auto batch = em.embed_batch(texts);
  ASSERT_EQ(batch.size(), texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(batch[i], em.embed_text(texts[i]));
  EXPECT_TRUE(em.embed_batch({}).empty());
  auto dup = em.embed_batch({"same", "other", "same"});
  EXPECT_EQ(dup[0], dup[2]);
  EXPECT_THROW(em.embed_batch({"ok", "  "}), std::invalid_argument);
}

TEST(EmbeddingCache, RoundTripAndColdMiss) {
  TempDir d;
  embed::EmbeddingCache c(d.path());
  EXPECT_FALSE(c.get("p", "text"));
  EmbeddingVector v{{1.5f, -0.0f, 3.25e-20f, 7.0f}};
  c.put("p", "text", v);
  auto back = c.get("p", "text");
  ASSERT_TRUE(back);
  ASSERT_EQ(back->values.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back->values[i]), std::bit_cast<std::uint32_t>(v.values[i]));
  EXPECT_FALSE(c.get("q", "text"));
  EXPECT_FALSE(c.get("p", "text2"));
  EXPECT_NE(embed::EmbeddingCache::key("ab", "c"), embed::EmbeddingCache::key("a", "bc"));
}

TEST(EmbeddingCache, CorruptEntryIsMissWithWarning) {
  TempDir d;
  embed::EmbeddingCache c(d.path());
  c.put("p", "t", EmbeddingVector{{1.0f, 2.0f}});
  auto path = c.path_for("p", "t");
  auto bytes = testing::read_file(path);
  std::vector<std::string> warnings;
  log::set_sink([&](log::Level l, const std::string& m) {
    if (l == log::Level::warn) warnings.push_back(m);
  });
  testing::write_file(path, bytes.substr(0, bytes.size() - 3));
  EXPECT_FALSE(c.get("p", "t"));
  testing::write_file(path, "garbage");
  EXPECT_FALSE(c.get("p", "t"));
  log::set_sink({});
  EXPECT_EQ(warnings.size(), 2u);
  c.put("p", "t", EmbeddingVector{{1.0f, 2.0f}});
  EXPECT_TRUE(c.get("p", "t"));
}

TEST(Embedder, CacheIsTransparentAndHitsOnSecondPass) {
  TempDir d;
  auto provider = std::make_shared<embed::MockNgramProvider>();
  embed::Embedder plain(provider);
  std::vector<std::string> texts;
  for (int i = 0; i < 200; ++i) texts.push_back("corpus sentence number " + std::to_string(i));
  {
    embed::Embedder cached(provider, embed::EmbeddingCache(d.path()));
    auto first = cached.embed_batch(texts);
    EXPECT_EQ(cached.cache_hits(), 0u);
    EXPECT_EQ(cached.cache_misses(), 200u);
    EXPECT_EQ(first, plain.embed_batch(texts));
  }
  embed::Embedder again(provider, embed::EmbeddingCache(d.path()));
  auto second = again.embed_batch(texts);
  EXPECT_EQ(again.cache_hits(), 200u);
  EXPECT_EQ(again.cache_misses(), 0u);
  EXPECT_EQ(second, plain.embed_batch(texts));
}

TEST(EmbeddingCache, ConcurrentProcessesNeverTearReads) {
  TempDir d;
  const int kProcs = 3, kRounds = 300;
  std::vector<EmbeddingVector> values;
  for (int k = 0; k < 8; ++k) {
    EmbeddingVector v;
    for (int i = 0; i < 512; ++i) v.values.push_back(static_cast<float>(k * 1000 + i));
    values.push_back(v);
  }
  std::vector<pid_t> kids;
  for (int p = 0; p < kProcs; ++p) {
    pid_t pid = fork();
    ASSERT_GE(pid, 0);
    if (pid == 0) {
      int bad = 0;
      try {
        embed::EmbeddingCache c(d.path());
        for (int r = 0; r < kRounds; ++r) {
          int k = (r + p) % 8;
          std::string key = "text" + std::to_string(k);
          if ((r + p) % 2) c.put("p", key, values[static_cast<std::size_t>(k)]);
          auto got = c.get("p", key);
          if (got && !(*got == values[static_cast<std::size_t>(k)])) ++bad;
        }
      } catch (...) {
        bad = 100;
      }
      _exit(bad == 0 ? 0 : 1);
    }
    kids.push_back(pid);
  }
  for (pid_t k : kids) {
    int status = 0;
    waitpid(k, &status, 0);
    EXPECT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 0);
  }
  for (const auto& e : fs::recursive_directory_iterator(d.path()))
    EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos) << "leftover temp file " << e.path();
}

TEST(RemoteProvider, WireFormatOrderingAndBatching) {
  testing::StubServer srv;
  srv.embed = [](const std::vector<std::string>& in) {
    std::vector<std::vector<float>> out;
    for (const auto& t : in) out.push_back({static_cast<float>(t.size()), 1.0f, 0.5f});
    return out;
  };
  embed::RemoteEmbeddingProvider p("enc", 3, srv.base_url() + "/v1/embeddings", "k3y", testing::fast_retry(1), 2);
  std::vector<std::string> texts{"a", "bbb", "cc", "dddd", "e"};
  auto got = p.embed(texts);
  ASSERT_EQ(got.size(), 5u);
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(got[i].values[0], static_cast<float>(texts[i].size()));
  auto bodies = srv.bodies();
  ASSERT_EQ(bodies.size(), 3u);
  EXPECT_EQ(bodies[0]["model"], "enc");
  EXPECT_EQ(bodies[0]["input"], nlohmann::json({"a", "bbb"}));
  EXPECT_EQ(srv.auth_headers()[0], "Bearer k3y");
}

TEST(RemoteProvider, ParsesPlainArrayResponses) {
  auto v = embed::RemoteEmbeddingProvider::parse_response("[[1,2],[3,4]]");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[1].values, (std::vector<float>{3, 4}));
  EXPECT_THROW(embed::RemoteEmbeddingProvider::parse_response("{\"x\":1}"), IntegrityError);
  EXPECT_THROW(embed::RemoteEmbeddingProvider::parse_response("[[\"a\"]]"), IntegrityError);
}

TEST(RemoteProvider, DimMismatchIsIntegrityError) {
  testing::StubServer srv;
  srv.embed = [](const std::vector<std::string>& in) { return std::vector<std::vector<float>>(in.size(), {1, 2}); };
  embed::RemoteEmbeddingProvider p("enc", 3, srv.base_url() + "/v1/embeddings", "", testing::fast_retry(1));
  EXPECT_THROW(p.embed(std::vector<std::string>{"a"}), IntegrityError);
}

TEST(RemoteProvider, RetriesThenFailsWithTransportError) {
  testing::StubServer srv;
  srv.embed = [](const std::vector<std::string>& in) { return std::vector<std::vector<float>>(in.size(), {1, 0, 0}); };
  std::vector<long long> sleeps;
  srv.fail_next = 2;
  embed::RemoteEmbeddingProvider ok("enc", 3, srv.base_url() + "/v1/embeddings", "", testing::fast_retry(3, &sleeps));
  EXPECT_EQ(ok.embed(std::vector<std::string>{"a"}).size(), 1u);
  EXPECT_EQ(sleeps, (std::vector<long long>{1000, 2000}));
  srv.fail_next = 5;
  EXPECT_THROW(ok.embed(std::vector<std::string>{"a"}), TransportError);
  embed::RemoteEmbeddingProvider down("enc", 3, "http://127.0.0.1:1/v1/embeddings", "", testing::fast_retry(2));
  EXPECT_THROW(down.embed(std::vector<std::string>{"a"}), TransportError);
}

TEST(LocalProvider, StaticTableMeanPooling) {
  TempDir d;
  testing::write_file(d / "vec.txt", "3 2\nski 1 0\nsnow 0 1\nthe 0 0\n");
  auto p = embed::make_provider("local:" + (d / "vec.txt").string());
  EXPECT_EQ(p->descriptor().dim, 2u);
  auto v = p->embed(std::vector<std::string>{"Ski snow", "ski"});
  EXPECT_NEAR(v[0].values[0], 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(v[0].values[1], 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_EQ(v[1].values, (std::vector<float>{1, 0}));
  EXPECT_THROW(p->embed(std::vector<std::string>{"unknown"}), IntegrityError);
  testing::write_file(d / "bad.txt", "a 1 2\nb 1\n");
  EXPECT_THROW(embed::StaticTableBackend(d / "bad.txt"), DataError);
}

TEST(CheckVectors, RejectsWrongCountDimOrNonFinite) {
  std::vector<EmbeddingVector> v{{{1, 2}}};
  EXPECT_NO_THROW(embed::check_vectors(v, 1, 2, "p"));
  EXPECT_THROW(embed::check_vectors(v, 2, 2, "p"), IntegrityError);
  EXPECT_THROW(embed::check_vectors(v, 1, 3, "p"), IntegrityError);
  v[0].values[0] = std::nanf("");
  EXPECT_THROW(embed::check_vectors(v, 1, 2, "p"), IntegrityError);
}

}  // namespace
}  // namespace lscg
