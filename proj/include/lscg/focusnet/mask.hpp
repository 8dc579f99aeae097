#pragma once

// Phase-3 classifier inputs and relevance-mask inference.
//
// e_f = ê_S ∥ e_ŵ (length 2d); the forest maps e_f to P(words contained).

#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lscg/corpus.hpp"
#include "lscg/embedding.hpp"
#include "lscg/errors.hpp"
#include "lscg/focusnet/forest.hpp"
#include "lscg/focusnet/model.hpp"
#include "lscg/focusnet/train.hpp"
#include "lscg/morphology.hpp"
#include "lscg/text.hpp"

namespace lscg::focusnet {

struct RelevanceMask {
  std::vector<int> mask;          // aligned with the input pool
  std::vector<std::string> k;     // pool words with mask 1, in pool order
  std::vector<double> scores;     // aligned with the input pool
};

inline std::vector<double> concat_features(const Vector& s_hat, const Vector& w_hat) {
  std::vector<double> f(static_cast<std::size_t>(s_hat.size() + w_hat.size()));
  for (Eigen::Index i = 0; i < s_hat.size(); ++i) f[static_cast<std::size_t>(i)] = s_hat[i];
  for (Eigen::Index i = 0; i < w_hat.size(); ++i) f[static_cast<std::size_t>(s_hat.size() + i)] = w_hat[i];
  return f;
}

/// Trained encoder + forest bound to the embedder they were trained with.
/// Read-only after construction apart from an internal per-word cache, so
/// concurrent calls are safe.
class FocusNet {
 public:
  FocusNet(FoCusNetParams params, ForestModel forest, std::shared_ptr<const embed::Embedder> embedder)
      : params_(std::move(params)), forest_(std::move(forest)), embedder_(std::move(embedder)) {
    if (params_.provider_id != embedder_->provider_id())
      throw IntegrityError("provider mismatch: model trained with '" + params_.provider_id +
                           "', embedder is '" + embedder_->provider_id() + "'");
    if (static_cast<Eigen::Index>(embedder_->dim()) != params_.input_dim())
      throw IntegrityError("embedder dim " + std::to_string(embedder_->dim()) + " != model input dim " +
                           std::to_string(params_.input_dim()));
    if (forest_.n_features != 2 * params_.proj_dim())
      throw IntegrityError("forest feature count " + std::to_string(forest_.n_features) + " != 2d = " +
                           std::to_string(2 * params_.proj_dim()));
  }

  const FoCusNetParams& params() const { return params_; }
  const ForestModel& forest() const { return forest_; }
  const embed::Embedder& embedder() const { return *embedder_; }

  Vector refine(std::string_view sentence) const {
    return refine_sentence(to_vector(embedder_->embed_text(sentence)), params_);
  }

  /// Equal, bit for bit, to aggregate_words over the words' embeddings.
  Vector word_set(const std::vector<std::string>& words) const {
    auto uniq = dedupe(words);
    if (uniq.empty()) throw std::invalid_argument("word_set: empty word list");
    warm(uniq);
    std::shared_lock lock(mu_);
    Vector scores(static_cast<Eigen::Index>(uniq.size()));
    for (std::size_t i = 0; i < uniq.size(); ++i) scores[static_cast<Eigen::Index>(i)] = cache_.at(uniq[i]).score;
    Vector a = softmax(scores);
    Vector u = Vector::Zero(params_.proj_dim());
    for (std::size_t i = 0; i < uniq.size(); ++i) u += a[static_cast<Eigen::Index>(i)] * cache_.at(uniq[i]).value;
    return l2_normalize(u);
  }

  double score(const Vector& s_hat, const std::vector<std::string>& words) const {
    return forest_.predict_proba(concat_features(s_hat, word_set(words)));
  }

  /// Probability that every word of the (deduplicated) set occurs in the sentence.
  double predict_contains(std::string_view sentence, const std::vector<std::string>& words) const {
    return score(refine(sentence), words);
  }

  RelevanceMask build_mask(std::string_view sentence, const std::vector<std::string>& pool,
                           double threshold = 0.5, std::size_t group_size = 1) const {
    if (pool.empty()) throw std::invalid_argument("build_mask: empty pool");
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("build_mask: threshold must be in (0,1)");
    if (group_size == 0) throw std::invalid_argument("build_mask: group_size must be >= 1");
    warm(dedupe(pool));
    Vector s_hat = refine(sentence);
    RelevanceMask m;
    m.mask.resize(pool.size());
    m.scores.resize(pool.size());
    for (std::size_t start = 0; start < pool.size(); start += group_size) {
      std::size_t end = std::min(pool.size(), start + group_size);
      std::vector<std::string> group(pool.begin() + static_cast<std::ptrdiff_t>(start),
                                     pool.begin() + static_cast<std::ptrdiff_t>(end));
      double p = score(s_hat, group);
      for (std::size_t i = start; i < end; ++i) {
        m.scores[i] = p;
        m.mask[i] = p >= threshold ? 1 : 0;
      }
    }
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (m.mask[i]) m.k.push_back(pool[i]);
    return m;
  }

  /// Embeds and projects words ahead of time (one provider batch).
  void warm(const std::vector<std::string>& words) const {
    std::vector<std::string> missing;
    {
      std::shared_lock lock(mu_);
      std::unordered_set<std::string> seen;
      for (const auto& w : words)
        if (!cache_.contains(w) && seen.insert(w).second) missing.push_back(w);
    }
    if (missing.empty()) return;
    auto embs = embedder_->embed_batch(missing);
    std::unique_lock lock(mu_);
    for (std::size_t i = 0; i < missing.size(); ++i) {
      Vector e = to_vector(embs[i]);
      check_dim(e, params_, "word");
      cache_.try_emplace(missing[i], WordProj{params_.gamma.transpose() * e, e.dot(params_.lambda) + params_.lambda_bias});
    }
  }

  static std::vector<std::string> dedupe(const std::vector<std::string>& words) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& w : words) {
      std::string n = text::normalize_word(w);
      if (!n.empty() && seen.insert(n).second) out.push_back(std::move(n));
    }
    return out;
  }

 private:
  struct WordProj {
    Vector value;
    double score;
  };

  FoCusNetParams params_;
  ForestModel forest_;
  std::shared_ptr<const embed::Embedder> embedder_;
  mutable std::shared_mutex mu_;
  mutable std::unordered_map<std::string, WordProj> cache_;
};

// ---------------------------------------------------------------- forest training data

/// Encoder-only view used while the forest does not exist yet.
class Encoder {
 public:
  Encoder(const FoCusNetParams& params, const embed::Embedder& embedder) : p_(params), em_(embedder) {
    if (p_.provider_id != em_.provider_id())
      throw IntegrityError("provider mismatch: model '" + p_.provider_id + "' vs embedder '" + em_.provider_id() + "'");
  }

  void warm_sentences(const std::vector<std::string>& texts) {
    std::vector<std::string> missing;
    std::unordered_set<std::string> seen;
    for (const auto& t : texts)
      if (!sent_.contains(t) && seen.insert(t).second) missing.push_back(t);
    if (missing.empty()) return;
    auto e = em_.embed_batch(missing);
    for (std::size_t i = 0; i < missing.size(); ++i) sent_.emplace(missing[i], refine_sentence(to_vector(e[i]), p_));
  }

  void warm_words(const std::vector<std::string>& words) {
    std::vector<std::string> missing;
    std::unordered_set<std::string> seen;
    for (const auto& w : words)
      if (!word_.contains(w) && seen.insert(w).second) missing.push_back(w);
    if (missing.empty()) return;
    auto e = em_.embed_batch(missing);
    for (std::size_t i = 0; i < missing.size(); ++i) word_.emplace(missing[i], to_vector(e[i]));
  }

  std::vector<double> features(const std::string& sentence, const std::vector<std::string>& words) {
    auto uniq = FocusNet::dedupe(words);
    warm_sentences({sentence});
    warm_words(uniq);
    std::vector<Vector> ws;
    for (const auto& w : uniq) ws.push_back(word_.at(w));
    return concat_features(sent_.at(sentence), aggregate_words(ws, p_));
  }

 private:
  const FoCusNetParams& p_;
  const embed::Embedder& em_;
  std::unordered_map<std::string, Vector> sent_;
  std::unordered_map<std::string, Vector> word_;
};

/// One feature row per triplet, label copied.
inline FeatureTable rf_table_from_triplets(const std::vector<TrainingTriplet>& triplets,
                                           const FoCusNetParams& params, const embed::Embedder& embedder) {
  Encoder enc(params, embedder);
  std::vector<std::string> sents, words;
  for (const auto& t : triplets) {
    sents.push_back(t.sentence);
    for (const auto& w : FocusNet::dedupe(t.words)) words.push_back(w);
  }
  enc.warm_sentences(sents);
  enc.warm_words(words);
  FeatureTable table;
  for (const auto& t : triplets) table.push(enc.features(t.sentence, t.words), t.label);
  return table;
}

/// Per entry with at least one verified concept: a positive row for its word
/// set and a negative row for an equally sized set of vocabulary words absent
/// from the sentence.
inline FeatureTable build_rf_training_set(const std::vector<CorpusEntry>& entries,
                                          const corpus::Vocabulary& vocab,
                                          const FoCusNetParams& params,
                                          const embed::Embedder& embedder, std::uint64_t seed,
                                          std::vector<TrainingTriplet>* pairs_out = nullptr) {
  std::vector<TrainingTriplet> pairs;
  for (const auto& e : entries) {
    morph::SentenceIndex index(e.sentence);
    auto words = corpus::verified_concepts(e, index);
    if (words.empty()) continue;
    Rng rng(derive_seed(seed, "rf/" + e.id()));
    std::unordered_set<std::string> taken;
    auto neg = corpus::sample_safe_words(vocab, index, words.size(), taken, rng);
    pairs.push_back({words, e.sentence, 1});
    pairs.push_back({std::move(neg), e.sentence, 0});
  }
  auto table = rf_table_from_triplets(pairs, params, embedder);
  if (pairs_out) *pairs_out = std::move(pairs);
  return table;
}

}  // namespace lscg::focusnet
