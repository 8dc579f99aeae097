#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/errors.hpp"
#include "lscg/morphology.hpp"
#include "lscg/rng.hpp"
#include "lscg/text.hpp"
#include "lscg/types.hpp"

namespace lscg::corpus {

namespace fs = std::filesystem;

/// Draw budget for rejection sampling of one word set.
inline constexpr std::size_t kSafeWordDrawCap = 10'000;

/// Default Words Checker sentence count per scenario.
inline constexpr std::size_t kScenarioSize = 1000;

inline constexpr std::string_view kGeneratorVersion = "words-checker-v1";

// ---------------------------------------------------------------- ingestion

/// Parses one CommonGen-style JSON line. Throws IngestionError.
inline CorpusEntry parse_corpus_line(std::string_view line, Partition partition,
                                     const std::string& path, std::size_t line_no) {
  nlohmann::json row;
  try {
    row = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(path, line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!row.is_object()) throw IngestionError(path, line_no, "row is not a JSON object");
  auto target = row.find("target");
  if (target == row.end() || !target->is_string())
    throw IngestionError(path, line_no, "missing string field 'target'");
  auto concepts = row.find("concepts");
  if (concepts == row.end() || !concepts->is_array())
    throw IngestionError(path, line_no, "missing array field 'concepts'");

  CorpusEntry e;
  e.partition = partition;
  e.line = line_no;
  e.sentence = std::string(text::trim(target->get<std::string>()));
  if (e.sentence.empty()) throw IngestionError(path, line_no, "empty sentence");
  for (const auto& c : *concepts) {
    if (!c.is_string()) throw IngestionError(path, line_no, "concept is not a string");
    std::string w = text::normalize_word(c.get<std::string>());
    if (text::tokenize(w).empty())
      throw IngestionError(path, line_no, "concept '" + w + "' has no alphanumeric content");
    e.concepts.push_back(std::move(w));
  }
  if (e.concepts.empty()) throw IngestionError(path, line_no, "empty concept list");
  return e;
}

/// Reads a JSON-lines corpus file. Blank lines are skipped; line numbers in
/// errors and entry ids refer to physical lines.
inline std::vector<CorpusEntry> load_corpus(const fs::path& path, Partition partition) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open corpus file " + path.string());
  std::vector<CorpusEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    out.push_back(parse_corpus_line(line, partition, path.string(), line_no));
  }
  if (out.empty()) throw IngestionError("empty corpus: " + path.string());
  return out;
}

/// Loads `<dir>/<partition>.jsonl` for every partition file present.
inline std::map<Partition, std::vector<CorpusEntry>> load_corpus_dir(const fs::path& dir) {
  std::map<Partition, std::vector<CorpusEntry>> out;
  for (Partition p : {Partition::train, Partition::validation, Partition::challenge_train,
                      Partition::challenge_validation}) {
    fs::path f = dir / (std::string(to_string(p)) + ".jsonl");
    if (fs::exists(f)) out[p] = load_corpus(f, p);
  }
  if (out.empty()) throw IngestionError("no partition files found in " + dir.string());
  return out;
}

inline std::vector<CorpusEntry> concat(const std::map<Partition, std::vector<CorpusEntry>>& parts,
                                       std::initializer_list<Partition> which) {
  std::vector<CorpusEntry> out;
  for (Partition p : which) {
    auto it = parts.find(p);
    if (it != parts.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

// ---------------------------------------------------------------- vocabulary

/// Deduplicated, sorted root words with their stem keys.
struct Vocabulary {
  std::vector<std::string> words;
  std::vector<std::string> keys;  // word_key(words[i])
  std::vector<Partition> source_partitions;

  std::size_t size() const { return words.size(); }
  bool contains(std::string_view w) const {
    return std::binary_search(words.begin(), words.end(), std::string(w));
  }
};

inline Vocabulary build_vocabulary(const std::vector<CorpusEntry>& entries) {
  if (entries.empty()) throw std::invalid_argument("build_vocabulary: no entries");
  std::set<std::string> words;
  std::set<Partition> parts;
  for (const auto& e : entries) {
    parts.insert(e.partition);
    for (const auto& c : e.concepts) words.insert(text::normalize_word(c));
  }
  Vocabulary v;
  v.words.assign(words.begin(), words.end());
  v.keys.reserve(v.words.size());
  for (const auto& w : v.words) v.keys.push_back(morph::word_key(w));
  v.source_partitions.assign(parts.begin(), parts.end());
  return v;
}

// ---------------------------------------------------------------- sampling

/// Concepts of `e` that the oracle confirms present, deduplicated by stem key.
inline std::vector<std::string> verified_concepts(const CorpusEntry& e,
                                                  const morph::SentenceIndex& index) {
  std::vector<std::string> out;
  std::unordered_set<std::string> keys;
  for (const auto& c : e.concepts) {
    std::string key = morph::word_key(c);
    if (keys.contains(key)) continue;
    if (index.contains_key(key)) {
      keys.insert(key);
      out.push_back(c);
    }
  }
  return out;
}

/// Draws `count` vocabulary words that are absent from the sentence and whose
/// stems are not in `taken`. Rejection sampling with a fixed draw budget.
inline std::vector<std::string> sample_safe_words(const Vocabulary& vocab,
                                                  const morph::SentenceIndex& index,
                                                  std::size_t count,
                                                  std::unordered_set<std::string>& taken, Rng& rng) {
  std::vector<std::string> out;
  out.reserve(count);
  std::size_t draws = 0;
  while (out.size() < count) {
    if (vocab.size() == 0 || draws >= kSafeWordDrawCap)
      throw GenerationError("vocabulary exhausted: needed " + std::to_string(count) +
                            " safe words, found " + std::to_string(out.size()) + " in " +
                            std::to_string(draws) + " draws (vocabulary size " +
                            std::to_string(vocab.size()) + ")");
    ++draws;
    std::size_t i = static_cast<std::size_t>(rng.index(vocab.size()));
    const std::string& key = vocab.keys[i];
    if (taken.contains(key) || index.contains_key(key)) continue;
    taken.insert(key);
    out.push_back(vocab.words[i]);
  }
  return out;
}

// ---------------------------------------------------------------- augmentation

struct AugmentStats {
  std::size_t entries_used = 0;
  std::size_t entries_skipped = 0;  // no concept verified present
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Builds FoCusNet training triplets from train/validation entries.
///
/// Every entry contributes its full verified word set as a positive plus, when
/// it has m >= 2 words, one random subset of each size 1..m-1. Each positive
/// is followed by a negative of the same size: vocabulary words none of which
/// occurs in the sentence.
inline std::vector<TrainingTriplet> augment_training_set(const std::vector<CorpusEntry>& entries,
                                                         const Vocabulary& vocab,
                                                         std::uint64_t seed,
                                                         AugmentStats* stats = nullptr) {
  AugmentStats st;
  std::vector<TrainingTriplet> out;
  for (const auto& e : entries) {
    if (is_challenge(e.partition))
      throw std::invalid_argument("augment_training_set: challenge partitions are reserved (" +
                                  e.id() + ")");
    morph::SentenceIndex index(e.sentence);
    auto words = verified_concepts(e, index);
    if (words.empty()) {
      ++st.entries_skipped;
      continue;
    }
    ++st.entries_used;
    Rng rng(derive_seed(seed, "augment/" + e.id()));

    std::vector<std::vector<std::string>> subsets{words};
    for (std::size_t size = 1; size < words.size(); ++size) {
      auto idx = rng.sample_indices(words.size(), size);
      std::sort(idx.begin(), idx.end());
      std::vector<std::string> sub;
      for (auto i : idx) sub.push_back(words[i]);
      subsets.push_back(std::move(sub));
    }
    for (auto& sub : subsets) {
      std::unordered_set<std::string> taken;
      auto neg = sample_safe_words(vocab, index, sub.size(), taken, rng);
      out.push_back({std::move(sub), e.sentence, 1});
      out.push_back({std::move(neg), e.sentence, 0});
      ++st.positives;
      ++st.negatives;
    }
  }
  if (stats) *stats = st;
  return out;
}

// ---------------------------------------------------------------- words checker

/// A challenge sentence chosen for the benchmark and its fixed label.
struct Assignment {
  std::size_t entry_index = 0;
  Label label = Label::valid;
};

/// Picks `count` challenge sentences and assigns labels. Depends only on the
/// entries and the seed, so every pool-size scenario sees the same sentences
/// with the same labels. Exactly floor(count/2) sentences are invalid.
inline std::vector<Assignment> assign_sentences(const std::vector<CorpusEntry>& entries,
                                                std::uint64_t seed,
                                                std::size_t count = kScenarioSize) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    morph::SentenceIndex index(entries[i].sentence);
    if (!verified_concepts(entries[i], index).empty()) candidates.push_back(i);
  }
  if (candidates.size() < count)
    throw GenerationError("need " + std::to_string(count) + " challenge sentences with a verified "
                          "concept, found " + std::to_string(candidates.size()));
  Rng select(derive_seed(seed, "selection"));
  select.shuffle(candidates);
  candidates.resize(count);
  std::sort(candidates.begin(), candidates.end());

  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng assign(derive_seed(seed, "assignment"));
  assign.shuffle(order);
  std::vector<Assignment> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i].entry_index = candidates[i];
  for (std::size_t r = 0; r < count / 2; ++r) out[order[r]].label = Label::invalid;
  return out;
}

inline std::vector<WordsCheckerSample> generate_words_checker(
    const std::vector<CorpusEntry>& entries, const std::vector<Assignment>& assignment,
    const Vocabulary& vocab, std::size_t pool_size, std::uint64_t seed) {
  std::vector<WordsCheckerSample> out;
  out.reserve(assignment.size());
  const std::uint64_t pool_seed = derive_seed(seed, "pool/" + std::to_string(pool_size));
  for (const auto& a : assignment) {
    const CorpusEntry& e = entries.at(a.entry_index);
    morph::SentenceIndex index(e.sentence);
    WordsCheckerSample s;
    s.sentence_id = e.id();
    s.sentence = e.sentence;
    s.label = a.label;
    Rng rng(derive_seed(pool_seed, s.sentence_id));
    std::unordered_set<std::string> taken;
    if (a.label == Label::invalid) {
      s.contained_words = verified_concepts(e, index);
      if (s.contained_words.size() > pool_size)
        throw GenerationError("pool size " + std::to_string(pool_size) + " smaller than |W|=" +
                              std::to_string(s.contained_words.size()) + " for " + s.sentence_id);
      for (const auto& w : s.contained_words) taken.insert(morph::word_key(w));
    }
    s.forbidden_pool = s.contained_words;
    auto safe = sample_safe_words(vocab, index, pool_size - s.contained_words.size(), taken, rng);
    s.forbidden_pool.insert(s.forbidden_pool.end(), safe.begin(), safe.end());
    rng.shuffle(s.forbidden_pool);
    out.push_back(std::move(s));
  }
  return out;
}

/// Convenience overload: assigns sentences from `seed` and generates one scenario.
inline std::vector<WordsCheckerSample> generate_words_checker(
    const std::vector<CorpusEntry>& entries, const Vocabulary& vocab, std::size_t pool_size,
    std::uint64_t seed, std::size_t count = kScenarioSize) {
  return generate_words_checker(entries, assign_sentences(entries, seed, count), vocab, pool_size,
                                seed);
}

/// Hash over the selected sentences and their labels, recorded in manifests.
inline std::string assignment_fingerprint(const std::vector<CorpusEntry>& entries,
                                          const std::vector<Assignment>& assignment) {
  std::uint64_t h = fnv1a64("");
  for (const auto& a : assignment) {
    const auto& e = entries.at(a.entry_index);
    h = fnv1a64(e.id(), h);
    h = fnv1a64(e.sentence, h);
    h = fnv1a64(to_string(a.label), h);
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

// ---------------------------------------------------------------- JSONL io

inline nlohmann::ordered_json to_json(const WordsCheckerSample& s) {
  nlohmann::ordered_json j;
  j["sentence_id"] = s.sentence_id;
  j["sentence"] = s.sentence;
  j["forbidden_pool"] = s.forbidden_pool;
  j["contained_words"] = s.contained_words;
  j["label"] = to_string(s.label);
  return j;
}

inline WordsCheckerSample sample_from_json(const nlohmann::json& j) {
  WordsCheckerSample s;
  s.sentence_id = j.at("sentence_id").get<std::string>();
  s.sentence = j.at("sentence").get<std::string>();
  s.forbidden_pool = j.at("forbidden_pool").get<std::vector<std::string>>();
  s.contained_words = j.at("contained_words").get<std::vector<std::string>>();
  s.label = parse_label(j.at("label").get<std::string>());
  return s;
}

inline void write_samples(const fs::path& path, const std::vector<WordsCheckerSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

inline std::vector<WordsCheckerSample> read_samples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::vector<WordsCheckerSample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::ordered_json to_json(const TrainingTriplet& t) {
  nlohmann::ordered_json j;
  j["words"] = t.words;
  j["sentence"] = t.sentence;
  j["label"] = t.label;
  return j;
}

inline void write_triplets(const fs::path& path, const std::vector<TrainingTriplet>& triplets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : triplets) out << to_json(t).dump() << '\n';
}

inline std::vector<TrainingTriplet> read_triplets(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open triplets " + path.string());
  std::vector<TrainingTriplet> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TrainingTriplet t;
      t.words = j.at("words").get<std::vector<std::string>>();
      t.sentence = j.at("sentence").get<std::string>();
      t.label = j.at("label").get<int>();
      if (t.words.empty() || (t.label != 0 && t.label != 1))
        throw DataError("bad triplet");
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

/// Version tag of a dataset file, read from the sibling manifest.json written
/// by `lscg datagen`; "unversioned" when absent.
inline std::string dataset_version(const fs::path& dataset_file) {
  fs::path manifest = dataset_file.parent_path() / "manifest.json";
  if (!fs::exists(manifest)) return "unversioned";
  std::ifstream in(manifest);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("corrupt manifest " + manifest.string());
  return j.value("generator", std::string("?")) + "/seed=" +
         std::to_string(j.value("seed", std::uint64_t{0})) + "/selection=" +
         j.value("assignment_fingerprint", std::string("?"));
}

inline std::string scenario_filename(std::size_t pool_size) {
  return "words_checker_F" + std::to_string(pool_size) + ".jsonl";
}

}  // namespace lscg::corpus
