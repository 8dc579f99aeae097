#pragma once

// Deterministic CommonGen-style corpus for desk-scale runs and tests.
//
// CommonGen itself is not redistributed with this project. This generator
// writes the same JSON-lines layout (`concepts`, `target`) for the four
// partitions. Root words are a small list of real English nouns/verbs plus
// pronounceable pseudo-words; every root is kept only if its stem is unique
// and each inflected surface form used in sentences stems back to it, so the
// morphology oracle certifies every concept.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/morphology.hpp"
#include "lscg/rng.hpp"
#include "lscg/text.hpp"
#include "lscg/types.hpp"

namespace lscg::synth {

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n_roots = 2400;        // vocabulary (concept) roots
  std::size_t n_fillers = 800;       // non-vocabulary content words
  std::size_t train_sets = 6000;     // concept sets in `train`
  std::size_t validation_sets = 400; // concept sets in `validation`
  std::size_t challenge_train = 700;
  std::size_t challenge_validation = 700;
};

struct Lexicon {
  std::vector<std::string> roots;
  std::vector<std::vector<std::string>> forms;  // surface forms per root, forms[i][0] == roots[i]
  std::vector<std::string> fillers;
};

inline const std::vector<std::string>& function_words() {
  static const std::vector<std::string> w{"the",  "a",    "with", "near", "over",  "and",
                                          "while", "on",  "in",   "at",   "by",    "from",
                                          "into", "under", "his", "her",  "their", "two"};
  return w;
}

inline const std::vector<std::string>& real_roots() {
  static const std::vector<std::string> w{
      "ski",     "snow",   "mountain", "athlete", "bathroom", "restroom", "clean",  "dog",
      "pirate",  "dress",  "lake",     "mount",   "sun",      "fun",      "podium", "winner",
      "sky",     "beach",  "guitar",   "river",   "bridge",   "camera",   "kitchen", "garden",
      "horse",   "window", "ocean",    "forest",  "market",   "coffee",   "paint",  "climb",
      "jump",    "kick",   "ball",     "field",   "player",   "stage",    "crowd",  "cook",
      "bread",   "table",  "chair",    "wall",    "rope",     "boat",     "fish",   "wave",
      "shirt",   "hat",    "road",     "car",     "truck",    "tree",     "leaf",   "flower",
      "bird",    "cat",    "milk",     "cheese",  "candle",   "lantern",  "helmet", "leather"};
  return w;
}

namespace detail {

inline std::string make_pseudo_word(Rng& rng) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v",
                                 "z", "br", "dr", "gr", "kl", "pl", "st", "tr", "sp", "sh"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "a", "o"};
  static const char* codas[] = {"n", "r", "l", "m", "t", "k", "d", "p", "nd", "rk"};
  std::size_t syll = 2 + rng.index(2);
  std::string w;
  for (std::size_t s = 0; s < syll; ++s) {
    w += onsets[rng.index(std::size(onsets))];
    w += vowels[rng.index(std::size(vowels))];
  }
  w += codas[rng.index(std::size(codas))];
  return w;
}

inline std::vector<std::string> candidate_forms(const std::string& r) {
  std::vector<std::string> f{r, r + "s"};
  if (r.back() == 'e') {
    f.push_back(r + "d");
    f.push_back(r.substr(0, r.size() - 1) + "ing");
  } else {
    f.push_back(r + "ed");
    f.push_back(r + "ing");
    f.push_back(r + "y");
  }
  return f;
}

}  // namespace detail

/// Builds roots and fillers with pairwise distinct stems.
inline Lexicon build_lexicon(const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "lexicon"));
  Lexicon lex;
  std::unordered_set<std::string> stems;
  std::unordered_set<std::string> seen;
  for (const auto& w : function_words()) stems.insert(morph::stem(w));

  auto try_add_root = [&](const std::string& r) {
    if (!seen.insert(r).second) return false;
    std::string st = morph::stem(r);
    if (stems.contains(st)) return false;
    std::vector<std::string> forms;
    for (const auto& f : detail::candidate_forms(r))
      if (morph::stem(f) == st) forms.push_back(f);
    if (forms.size() < 2) return false;
    stems.insert(st);
    lex.roots.push_back(r);
    lex.forms.push_back(std::move(forms));
    return true;
  };

  for (const auto& r : real_roots()) {
    if (lex.roots.size() >= cfg.n_roots) break;
    try_add_root(r);
  }
  std::size_t guard = 0;
  while (lex.roots.size() < cfg.n_roots && guard++ < cfg.n_roots * 50)
    try_add_root(detail::make_pseudo_word(rng));
  guard = 0;
  while (lex.fillers.size() < cfg.n_fillers && guard++ < cfg.n_fillers * 50) {
    std::string f = detail::make_pseudo_word(rng);
    if (!seen.insert(f).second) continue;
    std::string st = morph::stem(f);
    if (stems.contains(st)) continue;
    stems.insert(st);
    lex.fillers.push_back(f);
  }
  return lex;
}

inline std::string make_sentence(const Lexicon& lex, const std::vector<std::size_t>& concept_ids,
                                 Rng& rng) {
  std::vector<std::string> content;
  for (auto c : concept_ids) {
    const auto& forms = lex.forms[c];
    content.push_back(forms[rng.index(forms.size())]);
  }
  std::size_t n_fill = 1 + rng.index(3);
  for (std::size_t i = 0; i < n_fill && !lex.fillers.empty(); ++i)
    content.push_back(lex.fillers[rng.index(lex.fillers.size())]);
  rng.shuffle(content);

  const auto& fw = function_words();
  std::vector<std::string> toks{"the"};
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (i > 0 && rng.uniform() < 0.7) toks.push_back(fw[rng.index(fw.size())]);
    toks.push_back(content[i]);
  }
  std::string s = text::join(toks, " ");
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s + " .";
}

struct SynthRow {
  std::vector<std::string> concepts;
  std::string target;
};

inline std::size_t draw_concept_count(Rng& rng, bool challenge) {
  double u = rng.uniform();
  if (challenge) return u < 0.35 ? 1 : u < 0.70 ? 2 : u < 0.90 ? 3 : 4;
  return u < 0.80 ? 3 : u < 0.90 ? 2 : 4;
}

inline std::vector<SynthRow> make_partition(const Lexicon& lex, std::size_t n_sets, bool challenge,
                                            Rng& rng) {
  std::vector<SynthRow> rows;
  for (std::size_t s = 0; s < n_sets; ++s) {
    auto ids = rng.sample_indices(lex.roots.size(), draw_concept_count(rng, challenge));
    std::vector<std::string> concepts;
    for (auto i : ids) concepts.push_back(lex.roots[i]);
    // challenge rows carry one sentence per set; train sets get 1-3 sentences
    std::size_t n_sent = challenge ? 1 : 1 + rng.index(3);
    for (std::size_t k = 0; k < n_sent; ++k) rows.push_back({concepts, make_sentence(lex, ids, rng)});
  }
  return rows;
}

/// All four partitions, keyed by partition.
inline std::map<Partition, std::vector<SynthRow>> generate(const SynthConfig& cfg) {
  Lexicon lex = build_lexicon(cfg);
  std::map<Partition, std::vector<SynthRow>> out;
  Rng rt(derive_seed(cfg.seed, "train"));
  out[Partition::train] = make_partition(lex, cfg.train_sets, false, rt);
  Rng rv(derive_seed(cfg.seed, "validation"));
  out[Partition::validation] = make_partition(lex, cfg.validation_sets, false, rv);
  Rng rct(derive_seed(cfg.seed, "challenge_train"));
  out[Partition::challenge_train] = make_partition(lex, cfg.challenge_train, true, rct);
  Rng rcv(derive_seed(cfg.seed, "challenge_validation"));
  out[Partition::challenge_validation] = make_partition(lex, cfg.challenge_validation, true, rcv);
  return out;
}

/// Writes `<dir>/<partition>.jsonl` files; returns the row count per partition.
inline std::map<Partition, std::size_t> write_corpus(const std::filesystem::path& dir,
                                                     const SynthConfig& cfg) {
  std::filesystem::create_directories(dir);
  std::map<Partition, std::size_t> counts;
  for (const auto& [p, rows] : generate(cfg)) {
    std::ofstream out(dir / (std::string(to_string(p)) + ".jsonl"), std::ios::binary);
    for (const auto& r : rows) {
      nlohmann::ordered_json j;
      j["concepts"] = r.concepts;
      j["target"] = r.target;
      out << j.dump() << '\n';
    }
    counts[p] = rows.size();
  }
  return counts;
}

}  // namespace lscg::synth
