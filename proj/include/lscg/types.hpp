#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lscg/errors.hpp"

namespace lscg {

enum class Partition { train, validation, challenge_train, challenge_validation };

inline std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::validation: return "validation";
    case Partition::challenge_train: return "challenge_train";
    case Partition::challenge_validation: return "challenge_validation";
  }
  return "?";
}

inline std::optional<Partition> parse_partition(std::string_view s) {
  if (s == "train") return Partition::train;
  if (s == "validation") return Partition::validation;
  if (s == "challenge_train") return Partition::challenge_train;
  if (s == "challenge_validation") return Partition::challenge_validation;
  return std::nullopt;
}

inline bool is_challenge(Partition p) {
  return p == Partition::challenge_train || p == Partition::challenge_validation;
}

/// One CommonGen-style row: a sentence and the root words it contains.
struct CorpusEntry {
  std::string sentence;
  std::vector<std::string> concepts;
  Partition partition = Partition::train;
  std::size_t line = 0;  // 1-based line in the source file

  /// Stable identifier derived from partition and source line.
  std::string id() const {
    std::string n = std::to_string(line);
    if (n.size() < 6) n.insert(0, 6 - n.size(), '0');
    return std::string(to_string(partition)) + "-" + n;
  }
};

/// Words Checker label. `invalid` means the sentence contains a forbidden word.
enum class Label { valid, invalid };

inline std::string_view to_string(Label l) { return l == Label::valid ? "valid" : "invalid"; }

inline Label parse_label(std::string_view s) {
  if (s == "valid") return Label::valid;
  if (s == "invalid") return Label::invalid;
  throw DataError("unknown label '" + std::string(s) + "'");
}

struct WordsCheckerSample {
  std::string sentence_id;
  std::string sentence;
  std::vector<std::string> forbidden_pool;
  std::vector<std::string> contained_words;
  Label label = Label::valid;
};

/// (word subset, sentence, label): label 1 when every word is contained.
struct TrainingTriplet {
  std::vector<std::string> words;
  std::string sentence;
  int label = 0;
};

}  // namespace lscg
