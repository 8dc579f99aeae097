#include <gtest/gtest.h>

#include <set>

#include "lscg/focusnet/mask.hpp"
#include "lscg/focusnet/pipeline.hpp"
#include "support/fixtures.hpp"

namespace lscg::focusnet {
namespace {

using testing::TempDir;

class Trained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    embedder_ = std::make_shared<const embed::Embedder>(embed::make_provider("mock:ngram-v1:32"));
    triplets_ = new std::vector<TrainingTriplet>(testing::small_triplets());
    cfg_.hp.proj_dim = 16;
    cfg_.hp.epochs = 3;
    cfg_.hp.batch_size = 64;
    cfg_.hp.learning_rate = 1e-3;
    cfg_.forest.n_trees = 20;
    cfg_.max_triplets = 3000;
    result_ = new PipelineResult(train_pipeline(*triplets_, *embedder_, cfg_));
    net_ = new FocusNet(result_->params, result_->forest, embedder_);
  }
  static void TearDownTestSuite() {
    delete net_;
    delete result_;
    delete triplets_;
    embedder_.reset();
  }

  static inline std::shared_ptr<const embed::Embedder> embedder_;
  static inline std::vector<TrainingTriplet>* triplets_ = nullptr;
  static inline PipelineConfig cfg_;
  static inline PipelineResult* result_ = nullptr;
  static inline FocusNet* net_ = nullptr;
};

std::vector<std::string> pool_of(const std::vector<TrainingTriplet>& t, std::size_t start, std::size_t n) {
  std::vector<std::string> pool;
  std::set<std::string> seen;
  for (std::size_t i = start; pool.size() < n && i < t.size(); ++i)
    for (const auto& w : t[i].words)
      if (seen.insert(w).second && pool.size() < n) pool.push_back(w);
  return pool;
}

TEST_F(Trained, MaskAlignsWithPoolAndSelectsInOrder) {
  for (std::size_t c = 0; c < 100; ++c) {
    const auto& t = (*triplets_)[c * 7];
    auto pool = pool_of(*triplets_, c * 13, 10);
    pool.insert(pool.begin() + 3, t.words.begin(), t.words.end());
    auto m = net_->build_mask(t.sentence, pool, 0.5);
    ASSERT_EQ(m.mask.size(), pool.size());
    ASSERT_EQ(m.scores.size(), pool.size());
    std::vector<std::string> expect;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      EXPECT_GE(m.scores[i], 0.0);
      EXPECT_LE(m.scores[i], 1.0);
      EXPECT_EQ(m.mask[i], m.scores[i] >= 0.5 ? 1 : 0);
      if (m.mask[i]) expect.push_back(pool[i]);
    }
    EXPECT_EQ(m.k, expect);
  }
}

TEST_F(Trained, HigherThresholdKeepsSubset) {
  const auto& t = (*triplets_)[11];
  auto pool = pool_of(*triplets_, 40, 30);
  std::vector<std::string> prev = pool;
  for (double thr : {0.05, 0.2, 0.4, 0.5, 0.6, 0.8, 0.95}) {
    auto k = net_->build_mask(t.sentence, pool, thr).k;
    std::set<std::string> p(prev.begin(), prev.end());
    for (const auto& w : k) EXPECT_TRUE(p.contains(w)) << thr;
    EXPECT_LE(k.size(), prev.size());
    prev = k;
  }
}

TEST_F(Trained, GroupedScoringSharesOneScorePerGroup) {
  const auto& t = (*triplets_)[5];
  auto pool = pool_of(*triplets_, 0, 10);
  auto m = net_->build_mask(t.sentence, pool, 0.5, 3);
  for (std::size_t g = 0; g < pool.size(); g += 3) {
    std::vector<std::string> group(pool.begin() + static_cast<std::ptrdiff_t>(g),
                                   pool.begin() + static_cast<std::ptrdiff_t>(std::min(pool.size(), g + 3)));
    double p = net_->predict_contains(t.sentence, group);
    for (std::size_t i = g; i < std::min(pool.size(), g + 3); ++i) EXPECT_EQ(m.scores[i], p);
  }
}

TEST_F(Trained, DuplicateAndCaseVariantWordsScoreIdentically) {
  const auto& t = (*triplets_)[2];
  auto base = net_->predict_contains(t.sentence, t.words);
  auto doubled = t.words;
  doubled.insert(doubled.end(), t.words.begin(), t.words.end());
  EXPECT_EQ(net_->predict_contains(t.sentence, doubled), base);
  std::vector<std::string> upper;
  for (auto w : t.words) {
    for (auto& ch : w) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    upper.push_back(w);
  }
  EXPECT_EQ(net_->predict_contains(t.sentence, upper), base);
}

TEST_F(Trained, WordSetMatchesDirectAggregation) {
  std::vector<std::string> words = {"mountain", "snow", "river"};
  std::vector<Vector> embs;
  for (const auto& w : words) embs.push_back(to_vector(embedder_->embed_text(w)));
  Vector direct = aggregate_words(embs, net_->params());
  EXPECT_LT((net_->word_set(words) - direct).norm(), 1e-12);
}

TEST_F(Trained, InvalidMaskArgumentsRejected) {
  EXPECT_THROW(net_->build_mask("a sentence", {}, 0.5), std::invalid_argument);
  EXPECT_THROW(net_->build_mask("a sentence", {"x"}, 0.0), std::invalid_argument);
  EXPECT_THROW(net_->build_mask("a sentence", {"x"}, 1.0), std::invalid_argument);
  EXPECT_THROW(net_->build_mask("a sentence", {"x"}, 0.5, 0), std::invalid_argument);
  EXPECT_THROW(net_->word_set({"  "}), std::invalid_argument);
}

TEST_F(Trained, ProviderMismatchRejected) {
  auto other = std::make_shared<const embed::Embedder>(embed::make_provider("mock:ngram-v1"));
  EXPECT_THROW(FocusNet(result_->params, result_->forest, other), IntegrityError);
  auto p = result_->params;
  p.provider_id = "mock:ngram-v1";
  EXPECT_THROW(FocusNet(p, result_->forest, other), IntegrityError);
  auto f = result_->forest;
  f.n_features += 1;
  EXPECT_THROW(FocusNet(result_->params, f, embedder_), IntegrityError);
  EXPECT_THROW(Encoder(p, *embedder_), IntegrityError);
}

TEST_F(Trained, CheckpointRoundTripPreservesPredictions) {
  TempDir dir;
  save_checkpoint(dir.path(), *result_, cfg_);
  EXPECT_TRUE(fs::exists(dir / "train_log.json"));
  auto log = nlohmann::json::parse(testing::read_file(dir / "train_log.json"));
  EXPECT_EQ(log["provider_id"], "mock:ngram-v1:32");
  EXPECT_EQ(log["epochs"].size(), 3u);
  auto ck = load_checkpoint(dir.path());
  EXPECT_EQ(ck.params, result_->params);
  FocusNet back(ck.params, ck.forest, embedder_);
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& t = (*triplets_)[i * 3];
    EXPECT_EQ(back.predict_contains(t.sentence, t.words), net_->predict_contains(t.sentence, t.words));
  }
}

TEST_F(Trained, HoldoutAccuracyMatchesRecount) {
  auto split = split_by_sentence(subsample(*triplets_, cfg_.max_triplets, cfg_.split_seed),
                                 cfg_.holdout_fraction, cfg_.split_seed);
  ASSERT_EQ(split.train.size(), result_->train_triplets);
  ASSERT_EQ(split.holdout.size(), result_->holdout_triplets);
  ASSERT_FALSE(split.holdout.empty());
  std::size_t hit = 0;
  for (const auto& t : split.holdout) {
    double p = net_->predict_contains(t.sentence, t.words);
    hit += (p >= 0.5 ? 1 : 0) == t.label;
  }
  EXPECT_NEAR(result_->holdout_accuracy, static_cast<double>(hit) / static_cast<double>(split.holdout.size()),
              1e-12);
}

TEST(SplitBySentence, SentencesNeverStraddleTheSplit) {
  auto t = testing::small_triplets();
  auto s = split_by_sentence(t, 0.2, 4);
  EXPECT_EQ(s.train.size() + s.holdout.size(), t.size());
  std::set<std::string> train_s;
  for (const auto& x : s.train) train_s.insert(x.sentence);
  for (const auto& x : s.holdout) EXPECT_FALSE(train_s.contains(x.sentence));
  double frac = static_cast<double>(s.holdout.size()) / static_cast<double>(t.size());
  EXPECT_GT(frac, 0.1);
  EXPECT_LT(frac, 0.3);
  EXPECT_TRUE(split_by_sentence(t, 0.0, 4).holdout.empty());
  EXPECT_THROW(split_by_sentence(t, 1.0, 4), std::invalid_argument);
  EXPECT_EQ(subsample(t, 100, 1).size(), 100u);
  EXPECT_EQ(subsample(t, 0, 1).size(), t.size());
}

TEST(RfTrainingSet, TwoRowsPerUsableEntryWithOracleConsistentLabels) {
  TempDir dir;
  synth::write_corpus(dir.path(), testing::small_corpus_config());
  auto parts = corpus::load_corpus_dir(dir.path());
  auto all = corpus::concat(parts, {Partition::train, Partition::validation, Partition::challenge_train,
                                    Partition::challenge_validation});
  auto entries = parts.at(Partition::validation);
  auto vocab = corpus::build_vocabulary(all);
  embed::Embedder em(embed::make_provider("mock:ngram-v1:32"));
  auto params = init_params(32, 8, em.provider_id(), 1);
  std::vector<TrainingTriplet> pairs;
  auto table = build_rf_training_set(entries, vocab, params, em, 5, &pairs);
  std::size_t usable = 0;
  for (const auto& e : entries) {
    morph::SentenceIndex idx(e.sentence);
    usable += !corpus::verified_concepts(e, idx).empty();
  }
  EXPECT_EQ(table.rows, 2 * usable);
  EXPECT_EQ(table.cols, 16u);
  ASSERT_EQ(pairs.size(), table.rows);
  std::size_t pos = 0;
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    EXPECT_EQ(table.labels[r], pairs[r].label);
    pos += pairs[r].label;
    morph::SentenceIndex idx(pairs[r].sentence);
    for (const auto& w : pairs[r].words) EXPECT_EQ(idx.match(w).has_value(), pairs[r].label == 1) << w;
  }
  EXPECT_EQ(2 * pos, pairs.size());
  // same seed, same rows
  auto again = build_rf_training_set(entries, vocab, params, em, 5);
  EXPECT_EQ(again.values, table.values);
}

}  // namespace
}  // namespace lscg::focusnet
