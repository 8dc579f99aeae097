#pragma once

// Classification and parsing metrics. Positive class = invalid (the sentence
// contains a forbidden word). Verdicts without a label are excluded from the
// rates and counted separately.

#include <array>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lscg/errors.hpp"
#include "lscg/llm/harness.hpp"
#include "lscg/morphology.hpp"
#include "lscg/types.hpp"

namespace lscg::eval {

/// A rate with its 0/0 flag; an undefined rate reads as 0.
struct Rate {
  double value = 0.0;
  bool undefined = true;

  static Rate of(std::size_t num, std::size_t den) {
    if (den == 0) return {0.0, true};
    return {static_cast<double>(num) / static_cast<double>(den), false};
  }
};

struct ClassificationReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t parse_failures = 0;
  std::size_t endpoint_failures = 0;
  Rate accuracy, precision, recall;

  std::size_t scored() const { return tp + fp + tn + fn; }
  std::size_t total() const { return scored() + parse_failures + endpoint_failures; }

  void finalize() {
    accuracy = Rate::of(tp + tn, scored());
    precision = Rate::of(tp, tp + fp);
    recall = Rate::of(tp, tp + fn);
  }
  bool same_counts(const ClassificationReport& o) const {
    return tp == o.tp && fp == o.fp && tn == o.tn && fn == o.fn && parse_failures == o.parse_failures &&
           endpoint_failures == o.endpoint_failures;
  }
};

/// Streaming form of classification_metrics.
class ClassificationAccumulator {
 public:
  void add(const llm::Verdict& v, Label truth) {
    if (v.status == llm::VerdictStatus::endpoint_error) {
      ++r_.endpoint_failures;
      return;
    }
    if (!v.predicted_label) {
      ++r_.parse_failures;
      return;
    }
    bool pred = *v.predicted_label == Label::invalid;
    bool real = truth == Label::invalid;
    if (pred && real) ++r_.tp;
    else if (pred) ++r_.fp;
    else if (real) ++r_.fn;
    else ++r_.tn;
  }
  ClassificationReport report() const {
    auto r = r_;
    r.finalize();
    return r;
  }

 private:
  ClassificationReport r_;
};

inline std::unordered_map<std::string, const WordsCheckerSample*> index_by_id(
    const std::vector<WordsCheckerSample>& samples) {
  std::unordered_map<std::string, const WordsCheckerSample*> m;
  for (const auto& s : samples) m.emplace(s.sentence_id, &s);
  return m;
}

inline ClassificationReport classification_metrics(const std::vector<llm::Verdict>& verdicts,
                                                   const std::vector<WordsCheckerSample>& truth) {
  auto idx = index_by_id(truth);
  ClassificationReport r;
  for (const auto& v : verdicts) {
    auto it = idx.find(v.sentence_id);
    if (it == idx.end()) throw DataError("verdict for unknown sentence_id '" + v.sentence_id + "'");
    if (v.status == llm::VerdictStatus::endpoint_error) {
      ++r.endpoint_failures;
    } else if (!v.predicted_label) {
      ++r.parse_failures;
    } else {
      const bool p = *v.predicted_label == Label::invalid;
      const bool t = it->second->label == Label::invalid;
      (p ? (t ? r.tp : r.fp) : (t ? r.fn : r.tn))++;
    }
  }
  r.finalize();
  return r;
}

// ---------------------------------------------------------------- parsing metrics

struct ParsingScore {
  double precision = 0.0;
  double recall = 0.0;
};

/// Membership by stem key; predicted words are deduplicated by key first.
inline ParsingScore parsing_metrics(const std::vector<std::string>& predicted,
                                    const std::vector<std::string>& truth) {
  std::unordered_set<std::string> w;
  for (const auto& x : truth)
    if (!text::trim(x).empty()) w.insert(morph::word_key(x));
  if (w.empty()) throw std::invalid_argument("parsing_metrics: empty ground-truth word set");
  std::unordered_set<std::string> p;
  for (const auto& x : predicted)
    if (!text::tokenize(x).empty()) p.insert(morph::word_key(x));
  if (p.empty()) return {0.0, 0.0};
  std::size_t hit = 0;
  for (const auto& k : p) hit += w.contains(k);
  return {static_cast<double>(hit) / static_cast<double>(p.size()),
          static_cast<double>(hit) / static_cast<double>(w.size())};
}

inline constexpr std::array<double, 7> kHistogramBins{0.0, 0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.75, 1.0};
inline constexpr std::array<std::string_view, 8> kHistogramLabels{"0", "25", "33.3", "50", "66.7", "75", "100", "other"};

/// Index into kHistogramLabels; values not at a bin (within 1e-9) go to "other".
inline std::size_t histogram_bin(double x) {
  for (std::size_t i = 0; i < kHistogramBins.size(); ++i)
    if (std::abs(x - kHistogramBins[i]) < 1e-9) return i;
  return kHistogramBins.size();
}

struct ParsingReport {
  std::vector<std::pair<std::string, ParsingScore>> pairs;  // sentence_id, score
  std::array<std::size_t, 8> precision_hist{};
  std::array<std::size_t, 8> recall_hist{};
  double mean_precision = 0.0;
  double mean_recall = 0.0;
};

inline ParsingReport distribution_report(std::vector<std::pair<std::string, ParsingScore>> pairs) {
  ParsingReport r;
  for (const auto& [id, s] : pairs) {
    ++r.precision_hist[histogram_bin(s.precision)];
    ++r.recall_hist[histogram_bin(s.recall)];
    r.mean_precision += s.precision;
    r.mean_recall += s.recall;
  }
  if (!pairs.empty()) {
    r.mean_precision /= static_cast<double>(pairs.size());
    r.mean_recall /= static_cast<double>(pairs.size());
  }
  r.pairs = std::move(pairs);
  return r;
}

/// Parsing scores for invalid samples whose verdict carries a word list.
inline ParsingReport parsing_report(const std::vector<llm::Verdict>& verdicts,
                                    const std::vector<WordsCheckerSample>& truth) {
  auto idx = index_by_id(truth);
  std::vector<std::pair<std::string, ParsingScore>> pairs;
  for (const auto& v : verdicts) {
    auto it = idx.find(v.sentence_id);
    if (it == idx.end()) throw DataError("verdict for unknown sentence_id '" + v.sentence_id + "'");
    if (it->second->label != Label::invalid || !v.predicted_words) continue;
    pairs.emplace_back(v.sentence_id, parsing_metrics(*v.predicted_words, it->second->contained_words));
  }
  return distribution_report(std::move(pairs));
}

inline std::string histogram_csv(const ParsingReport& r) {
  std::string out = "bin,precision_count,recall_count\n";
  for (std::size_t i = 0; i < kHistogramLabels.size(); ++i)
    out += std::string(kHistogramLabels[i]) + "," + std::to_string(r.precision_hist[i]) + "," +
           std::to_string(r.recall_hist[i]) + "\n";
  return out;
}

}  // namespace lscg::eval
