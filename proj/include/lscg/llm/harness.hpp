#pragma once

// Test-steering strategies over a chat endpoint, and the sample runner.

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/focusnet/mask.hpp"
#include "lscg/llm/chat.hpp"
#include "lscg/llm/parse.hpp"
#include "lscg/llm/prompts.hpp"
#include "lscg/types.hpp"

namespace lscg::llm {

enum class StrategyKind { simple, cot, best_of_n, focusnet, listwords };

struct StrategyConfig {
  StrategyKind kind = StrategyKind::simple;
  int n_judges = 3;
  double temperature = 0.2;
  int max_tokens = 4096;
  std::string model;
  double mask_threshold = 0.5;   // focusnet only
  std::size_t mask_group_size = 1;

  /// Temperature 0.2 for simple, 0.4 otherwise.
  static StrategyConfig defaults(StrategyKind k) {
    StrategyConfig c;
    c.kind = k;
    c.temperature = k == StrategyKind::simple ? 0.2 : 0.4;
    return c;
  }

  void validate() const {
    if (kind == StrategyKind::best_of_n && n_judges < 2) throw std::invalid_argument("best_of_n needs n_judges >= 2");
    if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
    if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
  }
};

inline std::string strategy_name(const StrategyConfig& c) {
  switch (c.kind) {
    case StrategyKind::simple: return "simple";
    case StrategyKind::cot: return "cot";
    case StrategyKind::best_of_n: return "best" + std::to_string(c.n_judges);
    case StrategyKind::focusnet: return "focusnet";
    case StrategyKind::listwords: return "listwords";
  }
  return "?";
}

/// Accepts simple, cot, bestN (e.g. best3), best_of_n, focusnet, listwords.
inline StrategyConfig parse_strategy(std::string_view name) {
  if (name == "simple") return StrategyConfig::defaults(StrategyKind::simple);
  if (name == "cot") return StrategyConfig::defaults(StrategyKind::cot);
  if (name == "focusnet") return StrategyConfig::defaults(StrategyKind::focusnet);
  if (name == "listwords") return StrategyConfig::defaults(StrategyKind::listwords);
  if (name == "best_of_n") return StrategyConfig::defaults(StrategyKind::best_of_n);
  if (name.rfind("best", 0) == 0 && name.size() > 4) {
    auto c = StrategyConfig::defaults(StrategyKind::best_of_n);
    c.n_judges = std::stoi(std::string(name.substr(4)));
    return c;
  }
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

enum class VerdictStatus { ok, parse_error, endpoint_error };

inline std::string_view to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::ok: return "ok";
    case VerdictStatus::parse_error: return "parse_error";
    case VerdictStatus::endpoint_error: return "endpoint_error";
  }
  return "?";
}

inline VerdictStatus parse_status(std::string_view s) {
  if (s == "ok") return VerdictStatus::ok;
  if (s == "parse_error") return VerdictStatus::parse_error;
  if (s == "endpoint_error") return VerdictStatus::endpoint_error;
  throw DataError("unknown verdict status '" + std::string(s) + "'");
}

struct Verdict {
  std::string sentence_id;
  std::string strategy;
  VerdictStatus status = VerdictStatus::ok;
  std::optional<Label> predicted_label;  // present iff status == ok
  std::optional<std::vector<std::string>> predicted_words;
  std::optional<std::vector<std::string>> reduced_set;  // k, focusnet only
  std::string error;
  std::vector<ChatExchange> transcripts;

  /// Everything except timings.
  bool same_outcome(const Verdict& o) const {
    if (sentence_id != o.sentence_id || strategy != o.strategy || status != o.status ||
        predicted_label != o.predicted_label || predicted_words != o.predicted_words ||
        reduced_set != o.reduced_set || error != o.error || transcripts.size() != o.transcripts.size())
      return false;
    for (std::size_t i = 0; i < transcripts.size(); ++i) {
      const auto &a = transcripts[i], &b = o.transcripts[i];
      if (!(a.request == b.request) || a.response_text != b.response_text ||
          a.finish_reason != b.finish_reason || a.error != b.error)
        return false;
    }
    return true;
  }
};

/// Derives status, label and word list from the stored transcripts alone.
/// run_strategy uses this too, so replaying a stored Verdict reproduces it.
inline void interpret(Verdict& v, bool list_words) {
  v.status = VerdictStatus::ok;
  v.predicted_label.reset();
  v.predicted_words.reset();
  v.error.clear();
  for (const auto& ex : v.transcripts)
    if (!ex.error.empty()) {
      v.status = VerdictStatus::endpoint_error;
      v.error = ex.error;
      return;
    }
  if (v.transcripts.empty()) {
    v.status = VerdictStatus::parse_error;
    v.error = "no exchanges";
    return;
  }
  const auto& last = v.transcripts.back();
  if (last.finish_reason == "length") {
    v.status = VerdictStatus::parse_error;
    v.error = "response truncated at max_tokens";
    return;
  }
  if (list_words) {
    if (!last_envelope(last.response_text)) {
      v.status = VerdictStatus::parse_error;
      v.error = "no <answer></answer> envelope in response";
      v.predicted_words = std::vector<std::string>{};
      return;
    }
    auto pw = parse_predicted_words(last.response_text);
    v.predicted_label = pw.words.empty() ? Label::valid : Label::invalid;
    v.predicted_words = std::move(pw.words);
    return;
  }
  auto a = parse_answer(last.response_text);
  if (!a.ok()) {
    v.status = VerdictStatus::parse_error;
    v.error = a.error;
    return;
  }
  v.predicted_label = *a.value ? Label::invalid : Label::valid;
}

inline ChatRequest make_request(const StrategyConfig& cfg, std::string prompt) {
  return {cfg.model, {{"user", std::move(prompt)}}, cfg.temperature, cfg.max_tokens};
}

/// The prompt(s) a strategy sends first. For best_of_n this is the judge query
/// (sent n_judges times); the final-verdict prompt depends on the replies.
inline std::string compose_query(const StrategyConfig& cfg, std::string_view sentence,
                                 const std::vector<std::string>& words) {
  switch (cfg.kind) {
    case StrategyKind::simple: return compose(kSimpleTemplate, sentence, words);
    case StrategyKind::cot:
    case StrategyKind::focusnet: return compose(kCotTemplate, sentence, words);
    case StrategyKind::best_of_n: return compose(kJudgeTemplate, sentence, words);
    case StrategyKind::listwords: return compose(kListWordsTemplate, sentence, words);
  }
  return {};
}

inline Verdict run_strategy(const StrategyConfig& cfg, const WordsCheckerSample& sample, ChatEndpoint& ep,
                            const focusnet::FocusNet* mask_builder = nullptr) {
  cfg.validate();
  Verdict v;
  v.sentence_id = sample.sentence_id;
  v.strategy = strategy_name(cfg);
  std::vector<std::string> words = sample.forbidden_pool;
  if (cfg.kind == StrategyKind::focusnet) {
    if (!mask_builder) throw std::invalid_argument("focusnet strategy requires a trained mask builder");
    auto m = mask_builder->build_mask(sample.sentence, sample.forbidden_pool, cfg.mask_threshold, cfg.mask_group_size);
    words = m.k;
    v.reduced_set = std::move(m.k);
  }
  std::string query = compose_query(cfg, sample.sentence, words);
  if (cfg.kind == StrategyKind::best_of_n) {
    std::vector<std::string> replies;
    for (int j = 0; j < cfg.n_judges; ++j) {
      v.transcripts.push_back(exchange(ep, make_request(cfg, query)));
      if (!v.transcripts.back().error.empty()) break;
      replies.push_back(v.transcripts.back().response_text);
    }
    if (static_cast<int>(replies.size()) == cfg.n_judges)
      v.transcripts.push_back(exchange(ep, make_request(cfg, compose_final(query, replies))));
  } else {
    v.transcripts.push_back(exchange(ep, make_request(cfg, std::move(query))));
  }
  interpret(v, cfg.kind == StrategyKind::listwords);
  return v;
}

inline Verdict replay(const Verdict& stored) {
  Verdict v = stored;
  interpret(v, stored.strategy == "listwords");
  return v;
}

struct RunOptions {
  int parallel = 1;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Up to `parallel` samples in flight; results are in dataset order.
inline std::vector<Verdict> run_all(const std::vector<WordsCheckerSample>& samples, const StrategyConfig& cfg,
                                    ChatEndpoint& ep, const focusnet::FocusNet* mask_builder = nullptr,
                                    const RunOptions& opt = {}) {
  cfg.validate();
  std::vector<Verdict> out(samples.size());
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mu;
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < samples.size();) {
      try {
        out[i] = run_strategy(cfg, samples[i], ep, mask_builder);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = samples.size();
        return;
      }
      std::size_t d = ++done;
      if (opt.progress) {
        std::lock_guard lock(progress_mu);
        opt.progress(d, samples.size());
      }
    }
  };
  const int p = std::max(1, opt.parallel);
  std::vector<std::thread> threads;
  for (int t = 1; t < p; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------- JSON

inline nlohmann::ordered_json to_json(const Verdict& v) {
  nlohmann::ordered_json j;
  j["sentence_id"] = v.sentence_id;
  j["strategy"] = v.strategy;
  j["status"] = std::string(to_string(v.status));
  j["predicted_label"] = v.predicted_label ? nlohmann::ordered_json(std::string(to_string(*v.predicted_label)))
                                           : nlohmann::ordered_json(nullptr);
  j["predicted_words"] = v.predicted_words ? nlohmann::ordered_json(*v.predicted_words) : nlohmann::ordered_json(nullptr);
  j["reduced_set"] = v.reduced_set ? nlohmann::ordered_json(*v.reduced_set) : nlohmann::ordered_json(nullptr);
  j["error"] = v.error;
  auto& tr = j["transcripts"] = nlohmann::ordered_json::array();
  for (const auto& e : v.transcripts) tr.push_back(to_json(e));
  return j;
}

inline Verdict verdict_from_json(const nlohmann::json& j) {
  try {
    Verdict v;
    v.sentence_id = j.at("sentence_id").get<std::string>();
    v.strategy = j.at("strategy").get<std::string>();
    v.status = parse_status(j.at("status").get<std::string>());
    if (!j.at("predicted_label").is_null()) v.predicted_label = parse_label(j["predicted_label"].get<std::string>());
    if (!j.at("predicted_words").is_null()) v.predicted_words = j["predicted_words"].get<std::vector<std::string>>();
    if (!j.at("reduced_set").is_null()) v.reduced_set = j["reduced_set"].get<std::vector<std::string>>();
    v.error = j.value("error", "");
    for (const auto& e : j.at("transcripts")) v.transcripts.push_back(exchange_from_json(e));
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed verdict: ") + e.what());
  }
}

inline void write_verdicts(const std::filesystem::path& file, const std::vector<Verdict>& verdicts) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  for (const auto& v : verdicts) out << to_json(v).dump() << '\n';
}

inline std::vector<Verdict> read_verdicts(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<Verdict> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IngestionError(file.string(), n, "invalid JSON");
    out.push_back(verdict_from_json(j));
  }
  return out;
}

}  // namespace lscg::llm
