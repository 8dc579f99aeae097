#pragma once

// Shared test helpers: temp directories, a scripted chat model, and an
// in-process OpenAI-compatible stub server.

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/corpus.hpp"
#include "lscg/http.hpp"
#include "lscg/llm/chat.hpp"
#include "lscg/llm/prompts.hpp"
#include "lscg/morphology.hpp"
#include "lscg/rng.hpp"
#include "lscg/synth_corpus.hpp"
#include "lscg/text.hpp"

namespace lscg::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "lscg") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

/// Small synthetic corpus, fast enough for unit tests.
inline synth::SynthConfig small_corpus_config() {
  synth::SynthConfig c;
  c.n_roots = 600;
  c.n_fillers = 200;
  c.train_sets = 400;
  c.validation_sets = 60;
  c.challenge_train = 60;
  c.challenge_validation = 60;
  return c;
}

/// Augmented triplets (positives and negatives) from the small corpus.
inline std::vector<TrainingTriplet> small_triplets(std::uint64_t seed = 3) {
  TempDir dir("triplets");
  synth::write_corpus(dir.path(), small_corpus_config());
  auto parts = corpus::load_corpus_dir(dir.path());
  auto all = corpus::concat(parts, {Partition::train, Partition::validation, Partition::challenge_train,
                                    Partition::challenge_validation});
  auto train = corpus::concat(parts, {Partition::train, Partition::validation});
  return corpus::augment_training_set(train, corpus::build_vocabulary(all), seed);
}

// ---------------------------------------------------------------- scripted model

/// Text of the line starting with `key` (last occurrence), without the key.
inline std::string last_line_value(const std::string& prompt, const std::string& key) {
  auto pos = prompt.rfind("\n" + key);
  if (pos == std::string::npos) return {};
  pos += key.size() + 1;
  auto end = prompt.find('\n', pos);
  return prompt.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

inline std::vector<std::string> split_words(const std::string& line) {
  std::vector<std::string> out;
  if (line == llm::kEmptyCandidates) return out;
  std::size_t start = 0;
  while (start <= line.size()) {
    auto comma = line.find(", ", start);
    if (comma == std::string::npos) comma = line.size();
    if (comma > start) out.push_back(line.substr(start, comma - start));
    start = comma + 2;
  }
  return out;
}

/// Deterministic stand-in for an LLM: the reply depends only on the request.
/// Answers with the morphology oracle, wrong on sentences whose hash is
/// divisible by `error_modulus` (0: never wrong).
struct ScriptedModel {
  std::uint64_t error_modulus = 7;

  std::string reply(const llm::ChatRequest& req) const {
    const std::string& prompt = req.messages.back().content;
    if (prompt.rfind("Give me your final opinion", 0) == 0) {
      auto answers = prompt.substr(prompt.find("a jury of LLMs answered:"));
      std::size_t yes = 0, no = 0;
      for (std::size_t p = 0; (p = answers.find("<answer>True</answer>", p)) != std::string::npos; ++p) ++yes;
      for (std::size_t p = 0; (p = answers.find("<answer>False</answer>", p)) != std::string::npos; ++p) ++no;
      // the template itself lists one example of each
      return yes > no ? "Majority says yes. <answer>True</answer>" : "Majority says no. <answer>False</answer>";
    }
    std::string sentence = last_line_value(prompt, "Sentence: ");
    auto words = split_words(last_line_value(prompt, "Words: "));
    morph::SentenceIndex idx(sentence);
    std::vector<std::string> hits;
    for (const auto& w : words)
      if (idx.match(w)) hits.push_back(w);
    bool contains = !hits.empty();
    if (error_modulus && fnv1a64(sentence) % error_modulus == 0) {
      contains = !contains;
      if (contains && !words.empty()) hits = {words.front()};
      if (!contains) hits.clear();
    }
    if (prompt.find("List every word") != std::string::npos)
      return "Found: <answer>" + text::join(hits, ", ") + "</answer>";
    std::string verdict = contains ? "True" : "False";
    if (prompt.find(llm::kGuidePhrase) != std::string::npos)
      return "<think>Checking each word against the sentence.</think> <answer>" + verdict + "</answer>";
    return "<answer>" + verdict + "</answer>";
  }
};

// ---------------------------------------------------------------- stub server

/// OpenAI-compatible chat (/v1/chat/completions) and embedding (/v1/embeddings)
/// endpoints on 127.0.0.1 with an ephemeral port.
class StubServer {
 public:
  using ChatHandler = std::function<std::string(const llm::ChatRequest&)>;
  using EmbedHandler = std::function<std::vector<std::vector<float>>(const std::vector<std::string>&)>;

  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& rq, httplib::Response& rs) {
      handle_chat(rq, rs);
    });
    server_.Post("/v1/embeddings", [this](const httplib::Request& rq, httplib::Response& rs) {
      handle_embed(rq, rs);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  ChatHandler chat = [](const llm::ChatRequest& r) { return ScriptedModel{}.reply(r); };
  EmbedHandler embed;
  std::atomic<int> fail_next{0};       // respond 503 to this many requests
  std::atomic<int> fail_status{503};
  std::atomic<bool> malformed{false};  // 200 with a non-JSON body
  std::atomic<bool> truncate{false};   // finish_reason "length"
  std::atomic<int> requests{0};

  std::vector<nlohmann::json> bodies() const {
    std::lock_guard lock(mu_);
    return bodies_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  bool pre(const httplib::Request& rq, httplib::Response& rs) {
    ++requests;
    {
      std::lock_guard lock(mu_);
      bodies_.push_back(nlohmann::json::parse(rq.body, nullptr, false));
      auth_.push_back(rq.get_header_value("Authorization"));
    }
    if (fail_next.fetch_sub(1) > 0) {
      rs.status = fail_status;
      rs.set_content("{\"error\":\"busy\"}", "application/json");
      return false;
    }
    fail_next = std::max(0, fail_next.load());
    if (malformed) {
      rs.set_content("<html>oops</html>", "text/html");
      return false;
    }
    return true;
  }

  void handle_chat(const httplib::Request& rq, httplib::Response& rs) {
    if (!pre(rq, rs)) return;
    auto req = llm::request_from_json(nlohmann::json::parse(rq.body));
    nlohmann::json out;
    out["model"] = req.model + "-served";
    out["choices"] = nlohmann::json::array(
        {{{"index", 0},
          {"message", {{"role", "assistant"}, {"content", chat(req)}}},
          {"finish_reason", truncate ? "length" : "stop"}}});
    rs.set_content(out.dump(), "application/json");
  }

  void handle_embed(const httplib::Request& rq, httplib::Response& rs) {
    if (!pre(rq, rs)) return;
    auto j = nlohmann::json::parse(rq.body);
    auto input = j.at("input").get<std::vector<std::string>>();
    auto vecs = embed(input);
    nlohmann::json data = nlohmann::json::array();
    // reversed on the wire; clients must order by "index"
    for (std::size_t i = vecs.size(); i-- > 0;) data.push_back({{"index", i}, {"embedding", vecs[i]}});
    rs.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
  }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> bodies_;
  std::vector<std::string> auth_;
};

/// Retry policy without real sleeping; records requested backoffs.
inline http::RetryPolicy fast_retry(int attempts, std::vector<long long>* sleeps = nullptr) {
  http::RetryPolicy p;
  p.attempts = attempts;
  p.timeout = std::chrono::seconds(10);
  p.sleep = [sleeps](std::chrono::milliseconds d) {
    if (sleeps) sleeps->push_back(d.count());
  };
  return p;
}

}  // namespace lscg::testing
