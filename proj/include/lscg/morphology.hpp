#pragma once

// Morphological matching used as ground truth for Words Checker.
//
// A word is "morphologically present" in a sentence when some sentence token
// reduces to the same stem. The stemmer is the classic Porter (1980) suffix
// stripper, extended with one derivational rule and iterated to a fixpoint:
//
//   1. Porter steps 1a, 1b, 1c, 2, 3, 4, 5a, 5b (with the usual "bli"->"ble"
//      and "logi"->"log" variants of the reference implementation).
//   2. Adjectival -y: a stem of length >= 4 ending in "i" (the trace of a
//      final "y" after step 1c) loses the "i"; a resulting double consonant
//      other than l/s/z is undoubled. This maps snowy->snow and sunny->sun
//      while leaving short roots like "ski" untouched.
//   3. The two stages repeat until the stem no longer changes, so
//      stem(stem(w)) == stem(w) for every input.
//
// Synonyms never match (restroom and bathroom are different stems).

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "lscg/text.hpp"
#include "lscg/types.hpp"

namespace lscg::morph {

namespace detail {

class PorterStemmer {
 public:
  std::string run(std::string word) {
    b_ = std::move(word);
    if (b_.size() <= 2) return b_;
    k_ = static_cast<int>(b_.size()) - 1;
    step1ab();
    if (k_ > 0) {
      step1c();
      step2();
      step3();
      step4();
      step5();
    }
    b_.resize(static_cast<std::size_t>(k_ + 1));
    return b_;
  }

 private:
  std::string b_;
  int k_ = 0;
  int j_ = 0;

  bool cons(int i) const {
    switch (b_[static_cast<std::size_t>(i)]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !cons(i - 1);
      default: return true;
    }
  }

  // number of VC sequences in b[0..j]
  int m() const {
    int n = 0, i = 0;
    while (true) {
      if (i > j_) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    while (true) {
      while (true) {
        if (i > j_) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      while (true) {
        if (i > j_) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i)
      if (!cons(i)) return true;
    return false;
  }

  bool double_c(int j) const {
    if (j < 1) return false;
    if (b_[static_cast<std::size_t>(j)] != b_[static_cast<std::size_t>(j - 1)]) return false;
    return cons(j);
  }

  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    char ch = b_[static_cast<std::size_t>(i)];
    return !(ch == 'w' || ch == 'x' || ch == 'y');
  }

  bool ends(std::string_view s) {
    int len = static_cast<int>(s.size());
    if (len > k_ + 1) return false;
    if (b_.compare(static_cast<std::size_t>(k_ - len + 1), s.size(), s) != 0) return false;
    j_ = k_ - len;
    return true;
  }

  void set_to(std::string_view s) {
    b_.resize(static_cast<std::size_t>(j_ + 1));
    b_ += s;
    k_ = j_ + static_cast<int>(s.size());
  }

  void r(std::string_view s) {
    if (m() > 0) set_to(s);
  }

  char at(int i) const { return b_[static_cast<std::size_t>(i)]; }

  void step1ab() {
    if (at(k_) == 's') {
      if (ends("sses")) {
        k_ -= 2;
      } else if (ends("ies")) {
        set_to("i");
      } else if (at(k_ - 1) != 's') {
        --k_;
      }
    }
    b_.resize(static_cast<std::size_t>(k_ + 1));
    if (ends("eed")) {
      if (m() > 0) --k_;
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
      if (ends("at")) {
        set_to("ate");
      } else if (ends("bl")) {
        set_to("ble");
      } else if (ends("iz")) {
        set_to("ize");
      } else if (double_c(k_)) {
        --k_;
        char ch = at(k_);
        if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
      } else {
        j_ = k_;
        if (m() == 1 && cvc(k_)) set_to("e");
      }
    }
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
  }

  void step2() {
    if (k_ < 1) return;
    switch (at(k_ - 1)) {
      case 'a':
        if (ends("ational")) { r("ate"); break; }
        if (ends("tional")) { r("tion"); break; }
        break;
      case 'c':
        if (ends("enci")) { r("ence"); break; }
        if (ends("anci")) { r("ance"); break; }
        break;
      case 'e':
        if (ends("izer")) { r("ize"); break; }
        break;
      case 'l':
        if (ends("bli")) { r("ble"); break; }
        if (ends("alli")) { r("al"); break; }
        if (ends("entli")) { r("ent"); break; }
        if (ends("eli")) { r("e"); break; }
        if (ends("ousli")) { r("ous"); break; }
        break;
      case 'o':
        if (ends("ization")) { r("ize"); break; }
        if (ends("ation")) { r("ate"); break; }
        if (ends("ator")) { r("ate"); break; }
        break;
      case 's':
        if (ends("alism")) { r("al"); break; }
        if (ends("iveness")) { r("ive"); break; }
        if (ends("fulness")) { r("ful"); break; }
        if (ends("ousness")) { r("ous"); break; }
        break;
      case 't':
        if (ends("aliti")) { r("al"); break; }
        if (ends("iviti")) { r("ive"); break; }
        if (ends("biliti")) { r("ble"); break; }
        break;
      case 'g':
        if (ends("logi")) { r("log"); break; }
        break;
      default: break;
    }
  }

  void step3() {
    switch (at(k_)) {
      case 'e':
        if (ends("icate")) { r("ic"); break; }
        if (ends("ative")) { r(""); break; }
        if (ends("alize")) { r("al"); break; }
        break;
      case 'i':
        if (ends("iciti")) { r("ic"); break; }
        break;
      case 'l':
        if (ends("ical")) { r("ic"); break; }
        if (ends("ful")) { r(""); break; }
        break;
      case 's':
        if (ends("ness")) { r(""); break; }
        break;
      default: break;
    }
  }

  void step4() {
    if (k_ < 1) return;
    switch (at(k_ - 1)) {
      case 'a':
        if (ends("al")) break;
        return;
      case 'c':
        if (ends("ance")) break;
        if (ends("ence")) break;
        return;
      case 'e':
        if (ends("er")) break;
        return;
      case 'i':
        if (ends("ic")) break;
        return;
      case 'l':
        if (ends("able")) break;
        if (ends("ible")) break;
        return;
      case 'n':
        if (ends("ant")) break;
        if (ends("ement")) break;
        if (ends("ment")) break;
        if (ends("ent")) break;
        return;
      case 'o':
        if (ends("ion") && j_ >= 0 && (at(j_) == 's' || at(j_) == 't')) break;
        if (ends("ou")) break;
        return;
      case 's':
        if (ends("ism")) break;
        return;
      case 't':
        if (ends("ate")) break;
        if (ends("iti")) break;
        return;
      case 'u':
        if (ends("ous")) break;
        return;
      case 'v':
        if (ends("ive")) break;
        return;
      case 'z':
        if (ends("ize")) break;
        return;
      default:
        return;
    }
    if (m() > 1) k_ = j_;
  }

  void step5() {
    j_ = k_;
    if (at(k_) == 'e') {
      int a = m();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    if (at(k_) == 'l' && double_c(k_) && m() > 1) --k_;
  }
};

inline std::string strip_adjectival_y(std::string s) {
  if (s.size() >= 4 && s.back() == 'i') {
    s.pop_back();
    std::size_t n = s.size();
    char c = s[n - 1];
    bool vowel = c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
    if (n >= 2 && c == s[n - 2] && !vowel && c != 'l' && c != 's' && c != 'z') s.pop_back();
  }
  return s;
}

}  // namespace detail

/// Stem of a single token. Lowercases its input; throws on empty input.
inline std::string stem(std::string_view word) {
  std::string w = text::normalize_word(word);
  if (w.empty()) throw std::invalid_argument("stem: empty word");
  detail::PorterStemmer porter;
  for (int iter = 0; iter < 32; ++iter) {
    std::string next = detail::strip_adjectival_y(porter.run(w));
    if (next == w) break;
    w = std::move(next);
  }
  return w;
}

/// Stem key of a (possibly multi-token) word: token stems joined by spaces.
inline std::string word_key(std::string_view word) {
  auto toks = text::tokenize(word);
  if (toks.empty()) throw std::invalid_argument("word_key: word has no alphanumeric content");
  std::string key;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) key += ' ';
    key += stem(toks[i]);
  }
  return key;
}

struct MorphMatch {
  std::string forbidden_word;
  std::string matched_token;
  std::string stem;
};

/// Tokens and stems of one sentence, for repeated membership queries.
class SentenceIndex {
 public:
  explicit SentenceIndex(std::string_view sentence) : tokens_(text::tokenize(sentence)) {
    stems_.reserve(tokens_.size());
    for (const auto& t : tokens_) stems_.push_back(stem(t));
    single_.insert(stems_.begin(), stems_.end());
  }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::string>& stems() const { return stems_; }

  /// Match of a precomputed word key (see word_key), if any.
  std::optional<MorphMatch> match_key(std::string_view word, std::string_view key) const {
    if (key.find(' ') == std::string_view::npos) {
      if (!single_.contains(std::string(key))) return std::nullopt;
      for (std::size_t i = 0; i < stems_.size(); ++i)
        if (stems_[i] == key) return MorphMatch{std::string(word), tokens_[i], stems_[i]};
      return std::nullopt;
    }
    // multi-token words must appear as a consecutive run
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= key.size()) {
      std::size_t sp = key.find(' ', start);
      if (sp == std::string_view::npos) sp = key.size();
      parts.emplace_back(key.substr(start, sp - start));
      start = sp + 1;
    }
    for (std::size_t i = 0; i + parts.size() <= stems_.size(); ++i) {
      bool ok = true;
      for (std::size_t p = 0; p < parts.size() && ok; ++p) ok = stems_[i + p] == parts[p];
      if (ok) {
        std::vector<std::string> toks(tokens_.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens_.begin() + static_cast<std::ptrdiff_t>(i + parts.size()));
        return MorphMatch{std::string(word), text::join(toks, " "), std::string(key)};
      }
    }
    return std::nullopt;
  }

  bool contains_key(std::string_view key) const { return match_key(key, key).has_value(); }

  std::optional<MorphMatch> match(std::string_view word) const {
    auto toks = text::tokenize(word);
    if (toks.empty()) return std::nullopt;
    return match_key(text::normalize_word(word), word_key(word));
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> stems_;
  std::unordered_set<std::string> single_;
};

/// Witness of `word` occurring in `sentence` as a root or morphological variant.
inline std::optional<MorphMatch> morph_match(std::string_view word, std::string_view sentence) {
  return SentenceIndex(sentence).match(word);
}

inline bool morphologically_present(std::string_view word, std::string_view sentence) {
  return morph_match(word, sentence).has_value();
}

struct OracleVerdict {
  Label label = Label::valid;
  std::vector<std::string> matched;  // sorted, deduplicated pool words
};

/// Perfect Words Checker solver: invalid iff any pool word is present.
inline OracleVerdict oracle_classify(const WordsCheckerSample& sample) {
  SentenceIndex index(sample.sentence);
  OracleVerdict v;
  for (const auto& w : sample.forbidden_pool)
    if (index.match(w)) v.matched.push_back(text::normalize_word(w));
  v.matched = text::sorted_unique(std::move(v.matched));
  v.label = v.matched.empty() ? Label::valid : Label::invalid;
  return v;
}

}  // namespace lscg::morph
