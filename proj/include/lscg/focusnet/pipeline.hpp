#pragma once

// End-to-end training: holdout split, contrastive encoder, forest, holdout accuracy.
// A checkpoint directory holds focusnet.json, forest.json and train_log.json.

#include <filesystem>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/embedding.hpp"
#include "lscg/focusnet/forest.hpp"
#include "lscg/focusnet/mask.hpp"
#include "lscg/focusnet/model.hpp"
#include "lscg/focusnet/train.hpp"

namespace lscg::focusnet {

namespace fs = std::filesystem;

struct PipelineConfig {
  TrainHyperparams hp;
  ForestConfig forest;
  double holdout_fraction = 0.1;
  std::size_t max_triplets = 0;  // 0: use all
  std::uint64_t split_seed = 29;
};

struct PipelineResult {
  FoCusNetParams params;
  ForestModel forest;
  std::vector<EpochLog> epochs;
  std::size_t train_triplets = 0;
  std::size_t holdout_triplets = 0;
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;  // at threshold 0.5; 0 when there is no holdout
};

struct Split {
  std::vector<TrainingTriplet> train, holdout;
};

/// Holds out whole sentences: every distinct sentence goes to the holdout
/// with probability `fraction`, drawn in first-appearance order.
inline Split split_by_sentence(const std::vector<TrainingTriplet>& triplets, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw std::invalid_argument("holdout fraction must be in [0,1)");
  Rng rng(derive_seed(seed, "holdout"));
  std::unordered_map<std::string, bool> held;
  Split s;
  for (const auto& t : triplets) {
    auto it = held.find(t.sentence);
    if (it == held.end()) it = held.emplace(t.sentence, fraction > 0.0 && rng.uniform() < fraction).first;
    (it->second ? s.holdout : s.train).push_back(t);
  }
  return s;
}

/// Keeps the first `n` triplets of a seeded permutation, restoring file order.
inline std::vector<TrainingTriplet> subsample(const std::vector<TrainingTriplet>& triplets, std::size_t n,
                                              std::uint64_t seed) {
  if (n == 0 || n >= triplets.size()) return triplets;
  Rng rng(derive_seed(seed, "subsample"));
  auto idx = rng.sample_indices(triplets.size(), n);
  std::sort(idx.begin(), idx.end());
  std::vector<TrainingTriplet> out;
  for (auto i : idx) out.push_back(triplets[i]);
  return out;
}

inline PipelineResult train_pipeline(const std::vector<TrainingTriplet>& triplets, const embed::Embedder& embedder,
                                     const PipelineConfig& cfg,
                                     const std::function<void(const std::string&)>& progress = {}) {
  auto say = [&](const std::string& m) {
    if (progress) progress(m);
  };
  auto split = split_by_sentence(subsample(triplets, cfg.max_triplets, cfg.split_seed), cfg.holdout_fraction,
                                 cfg.split_seed);
  if (split.train.empty()) throw DataError("no training triplets after the holdout split");
  PipelineResult r;
  r.train_triplets = split.train.size();
  r.holdout_triplets = split.holdout.size();
  say("embedding " + std::to_string(split.train.size()) + " training triplets");
  auto data = embed_positive_triplets(split.train, embedder);
  say("training encoder on " + std::to_string(data.items.size()) + " positives in " +
      std::to_string(data.group_count()) + " groups");
  auto trained = train_encoder(data, cfg.hp, {}, [&](const EpochLog& e) {
    say("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss));
  });
  r.params = std::move(trained.params);
  r.epochs = std::move(trained.log);
  say("training forest (" + std::to_string(cfg.forest.n_trees) + " trees)");
  auto table = rf_table_from_triplets(split.train, r.params, embedder);
  r.forest = train_forest(table, cfg.forest);
  r.train_accuracy = accuracy(r.forest, table);
  if (!split.holdout.empty())
    r.holdout_accuracy = accuracy(r.forest, rf_table_from_triplets(split.holdout, r.params, embedder));
  return r;
}

inline nlohmann::ordered_json train_log_json(const PipelineResult& r, const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["provider_id"] = r.params.provider_id;
  j["hyperparams"] = to_json(cfg.hp);
  j["forest"] = {{"n_trees", cfg.forest.n_trees},
                 {"max_depth", cfg.forest.max_depth},
                 {"min_samples_leaf", cfg.forest.min_samples_leaf},
                 {"seed", cfg.forest.seed}};
  j["holdout_fraction"] = cfg.holdout_fraction;
  j["train_triplets"] = r.train_triplets;
  j["holdout_triplets"] = r.holdout_triplets;
  auto& ep = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : r.epochs) ep.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"batches", e.batches}});
  j["train_accuracy"] = r.train_accuracy;
  j["holdout_accuracy"] = r.holdout_accuracy;
  return j;
}

inline void save_checkpoint(const fs::path& dir, const PipelineResult& r, const PipelineConfig& cfg) {
  fs::create_directories(dir);
  save_params(dir / "focusnet.json", r.params);
  save_forest(dir / "forest.json", r.forest);
  std::ofstream log(dir / "train_log.json", std::ios::binary | std::ios::trunc);
  log << train_log_json(r, cfg).dump(2) << '\n';
}

struct Checkpoint {
  FoCusNetParams params;
  ForestModel forest;
};

inline Checkpoint load_checkpoint(const fs::path& dir) {
  Checkpoint c;
  c.params = load_params(dir / "focusnet.json");
  c.forest = load_forest(dir / "forest.json", static_cast<int>(2 * c.params.proj_dim()));
  return c;
}

}  // namespace lscg::focusnet
