#pragma once

// Contrastive training of the FoCusNet encoder and grouped K-fold model selection.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/embedding.hpp"
#include "lscg/errors.hpp"
#include "lscg/focusnet/loss.hpp"
#include "lscg/focusnet/model.hpp"
#include "lscg/log.hpp"
#include "lscg/rng.hpp"
#include "lscg/text.hpp"
#include "lscg/types.hpp"

namespace lscg::focusnet {

enum class Optimizer { adam, sgd };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }
inline Optimizer parse_optimizer(std::string_view s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd") return Optimizer::sgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

struct TrainHyperparams {
  int proj_dim = 128;
  double learning_rate = 2.5e-4;
  double temperature = 0.05;
  int epochs = 24;
  int batch_size = 256;
  std::uint64_t seed = 13;
  Optimizer optimizer = Optimizer::adam;

  void validate() const {
    if (proj_dim <= 0) throw std::invalid_argument("proj_dim must be positive");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(temperature > 0)) throw std::invalid_argument("temperature must be positive");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  }
};

inline nlohmann::ordered_json to_json(const TrainHyperparams& h) {
  return {{"proj_dim", h.proj_dim},     {"learning_rate", h.learning_rate},
          {"temperature", h.temperature}, {"epochs", h.epochs},
          {"batch_size", h.batch_size}, {"seed", h.seed},
          {"optimizer", std::string(to_string(h.optimizer))}};
}

/// Fields absent from `j` keep the values of `base`.
inline TrainHyperparams hyperparams_from_json(const nlohmann::json& j, TrainHyperparams base = {}) {
  if (j.contains("proj_dim")) base.proj_dim = j["proj_dim"].get<int>();
  if (j.contains("learning_rate")) base.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("temperature")) base.temperature = j["temperature"].get<double>();
  if (j.contains("epochs")) base.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<int>();
  if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("optimizer")) base.optimizer = parse_optimizer(j["optimizer"].get<std::string>());
  return base;
}

/// Cartesian product in the order proj_dim, learning_rate, temperature, epochs
/// (last varies fastest). Missing axes take the single value from `base`.
inline std::vector<TrainHyperparams> expand_grid(const nlohmann::json& grid, const TrainHyperparams& base = {}) {
  auto axis = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    std::vector<T> v;
    if (grid.contains(key)) {
      const auto& a = grid[key];
      if (a.is_array())
        for (const auto& x : a) v.push_back(x.get<T>());
      else
        v.push_back(a.get<T>());
    } else {
      v.push_back(fallback);
    }
    return v;
  };
  auto dims = axis("proj_dim", base.proj_dim);
  auto lrs = axis("learning_rate", base.learning_rate);
  auto taus = axis("temperature", base.temperature);
  auto eps = axis("epochs", base.epochs);
  std::vector<TrainHyperparams> out;
  for (int d : dims)
    for (double lr : lrs)
      for (double t : taus)
        for (int e : eps) {
          TrainHyperparams h = base;
          h.proj_dim = d;
          h.learning_rate = lr;
          h.temperature = t;
          h.epochs = e;
          out.push_back(h);
        }
  return out;
}

/// The grid documented for `cv-search`.
inline nlohmann::json default_grid() {
  return {{"proj_dim", {64, 128, 256, 512}},
          {"learning_rate", {1e-4, 2.5e-4, 5e-4}},
          {"temperature", {0.05, 0.1, 0.2}},
          {"epochs", {30}}};
}

// ---------------------------------------------------------------- data

/// Canonical group key of a word set: sorted, deduplicated, normalized, comma-joined.
inline std::string group_key(const std::vector<std::string>& words) {
  std::vector<std::string> w;
  for (const auto& x : words) w.push_back(text::normalize_word(x));
  return text::join(text::sorted_unique(std::move(w)), ",");
}

struct EmbeddedItem {
  int sentence = 0;
  std::vector<int> words;
  std::int64_t group = 0;
};

/// Positive triplets with their embeddings resolved into dense tables.
struct EmbeddedSet {
  std::string provider_id;
  Matrix sentences;  // rows: unique sentences
  Matrix words;      // rows: unique words
  std::vector<std::string> sentence_texts;
  std::vector<std::string> word_texts;
  std::vector<std::string> group_keys;  // sorted; EmbeddedItem::group indexes this
  std::vector<EmbeddedItem> items;

  Eigen::Index dim() const { return sentences.cols(); }
  std::size_t group_count() const { return group_keys.size(); }
};

inline Matrix to_matrix(const std::vector<embed::EmbeddingVector>& v, std::size_t dim) {
  Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t k = 0; k < dim; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[i].values[k];
  return m;
}

inline Vector to_vector(const embed::EmbeddingVector& e) {
  Vector v(static_cast<Eigen::Index>(e.dim()));
  for (std::size_t k = 0; k < e.dim(); ++k) v[static_cast<Eigen::Index>(k)] = e.values[k];
  return v;
}

/// Keeps label-1 triplets only; negatives play no role in the contrastive stage.
inline EmbeddedSet embed_positive_triplets(const std::vector<TrainingTriplet>& triplets,
                                           const embed::Embedder& embedder) {
  EmbeddedSet s;
  s.provider_id = embedder.provider_id();
  std::unordered_map<std::string, int> sent_ix, word_ix;
  std::map<std::string, std::int64_t> groups;
  struct Raw {
    int sentence;
    std::vector<int> words;
    std::string key;
  };
  std::vector<Raw> raw;
  for (const auto& t : triplets) {
    if (t.label != 1) continue;
    Raw r;
    auto [it, fresh] = sent_ix.try_emplace(t.sentence, static_cast<int>(s.sentence_texts.size()));
    if (fresh) s.sentence_texts.push_back(t.sentence);
    r.sentence = it->second;
    std::vector<std::string> ws;
    for (const auto& w : t.words) ws.push_back(text::normalize_word(w));
    ws = text::sorted_unique(std::move(ws));
    if (ws.empty()) throw DataError("positive triplet without words");
    for (const auto& w : ws) {
      auto [wt, wfresh] = word_ix.try_emplace(w, static_cast<int>(s.word_texts.size()));
      if (wfresh) s.word_texts.push_back(w);
      r.words.push_back(wt->second);
    }
    r.key = text::join(ws, ",");
    groups.emplace(r.key, 0);
    raw.push_back(std::move(r));
  }
  if (raw.empty()) throw DataError("no positive triplets to train on");
  std::int64_t g = 0;
  for (auto& [k, id] : groups) {
    id = g++;
    s.group_keys.push_back(k);
  }
  for (auto& r : raw) s.items.push_back({r.sentence, std::move(r.words), groups[r.key]});
  s.sentences = to_matrix(embedder.embed_batch(s.sentence_texts), embedder.dim());
  s.words = to_matrix(embedder.embed_batch(s.word_texts), embedder.dim());
  return s;
}

/// Batch over the given item indices with a compact word table.
inline Batch make_batch(const EmbeddedSet& data, const std::vector<std::size_t>& idx) {
  Batch b;
  const auto B = static_cast<Eigen::Index>(idx.size());
  b.sentences.resize(B, data.dim());
  std::unordered_map<int, int> local;
  std::vector<int> order;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& it = data.items[idx[r]];
    b.sentences.row(static_cast<Eigen::Index>(r)) = data.sentences.row(it.sentence);
    std::vector<int> ids;
    for (int w : it.words) {
      auto [pos, fresh] = local.try_emplace(w, static_cast<int>(order.size()));
      if (fresh) order.push_back(w);
      ids.push_back(pos->second);
    }
    b.word_ids.push_back(std::move(ids));
    b.groups.push_back(it.group);
  }
  b.words.resize(static_cast<Eigen::Index>(order.size()), data.dim());
  for (std::size_t k = 0; k < order.size(); ++k) b.words.row(static_cast<Eigen::Index>(k)) = data.words.row(order[k]);
  return b;
}

/// Whole groups, in seeded shuffled order, packed into batches of about
/// batch_size items (a batch closes once it reaches batch_size). Keeping each
/// group inside one batch gives every multi-item group its in-batch positives.
/// A trailing single-group batch is merged into its predecessor.
inline std::vector<std::vector<std::size_t>> plan_batches(const EmbeddedSet& data,
                                                          const std::vector<std::size_t>& items,
                                                          int batch_size, Rng& rng) {
  std::map<std::int64_t, std::vector<std::size_t>> by_group;
  for (auto i : items) by_group[data.items[i].group].push_back(i);
  if (by_group.size() < 2) throw std::invalid_argument("training data holds a single group; InfoNCE needs negatives");
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [g, v] : by_group) groups.push_back(&v);
  rng.shuffle(groups);
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  std::size_t cur_groups = 0;
  for (const auto* g : groups) {
    cur.insert(cur.end(), g->begin(), g->end());
    ++cur_groups;
    if (cur.size() >= static_cast<std::size_t>(batch_size) && cur_groups >= 2) {
      out.push_back(std::exchange(cur, {}));
      cur_groups = 0;
    }
  }
  if (!cur.empty()) {
    if (cur_groups >= 2 || out.empty())
      out.push_back(std::move(cur));
    else
      out.back().insert(out.back().end(), cur.begin(), cur.end());
  }
  return out;
}

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  std::size_t batches = 0;
};

struct TrainResult {
  FoCusNetParams params;
  std::vector<EpochLog> log;
};

namespace detail {

struct AdamState {
  Gradients m, v;
  std::int64_t t = 0;
};

template <typename T>
void adam_step(T& param, const T& g, T& m, T& v, double lr, double bc1, double bc2) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  m = b1 * m + (1 - b1) * g;
  v = b2 * v + (1 - b2) * g.cwiseProduct(g);
  param -= lr * ((m / bc1).array() / ((v / bc2).array().sqrt() + eps)).matrix();
}

inline void apply_update(FoCusNetParams& p, const Gradients& g, const TrainHyperparams& hp,
                         AdamState& st) {
  const double lr = hp.learning_rate;
  if (hp.optimizer == Optimizer::sgd) {
    p.chi -= lr * g.chi;
    p.chi_bias -= lr * g.chi_bias;
    p.gamma -= lr * g.gamma;
    p.lambda -= lr * g.lambda;
    p.lambda_bias -= lr * g.lambda_bias;
    return;
  }
  ++st.t;
  const double bc1 = 1 - std::pow(0.9, static_cast<double>(st.t));
  const double bc2 = 1 - std::pow(0.999, static_cast<double>(st.t));
  adam_step(p.chi, g.chi, st.m.chi, st.v.chi, lr, bc1, bc2);
  adam_step(p.chi_bias, g.chi_bias, st.m.chi_bias, st.v.chi_bias, lr, bc1, bc2);
  adam_step(p.gamma, g.gamma, st.m.gamma, st.v.gamma, lr, bc1, bc2);
  adam_step(p.lambda, g.lambda, st.m.lambda, st.v.lambda, lr, bc1, bc2);
  // the lambda bias gradient is identically zero (softmax shift invariance)
  st.m.lambda_bias = 0.9 * st.m.lambda_bias + 0.1 * g.lambda_bias;
  st.v.lambda_bias = 0.999 * st.v.lambda_bias + 0.001 * g.lambda_bias * g.lambda_bias;
  p.lambda_bias -= lr * (st.m.lambda_bias / bc1) / (std::sqrt(st.v.lambda_bias / bc2) + 1e-8);
}

}  // namespace detail

/// Trains on `subset` (all items when empty). Deterministic in hp.seed.
inline TrainResult train_encoder(const EmbeddedSet& data, const TrainHyperparams& hp,
                                 std::vector<std::size_t> subset = {},
                                 const std::function<void(const EpochLog&)>& on_epoch = {}) {
  hp.validate();
  if (subset.empty()) {
    subset.resize(data.items.size());
    for (std::size_t i = 0; i < subset.size(); ++i) subset[i] = i;
  }
  TrainResult res;
  res.params = init_params(data.dim(), hp.proj_dim, data.provider_id, derive_seed(hp.seed, "init"));
  detail::AdamState st{Gradients::zeros_like(res.params), Gradients::zeros_like(res.params), 0};
  Gradients g;
  for (int e = 1; e <= hp.epochs; ++e) {
    Rng rng(derive_seed(hp.seed, "epoch/" + std::to_string(e)));
    auto plan = plan_batches(data, subset, hp.batch_size, rng);
    double total = 0;
    for (std::size_t bi = 0; bi < plan.size(); ++bi) {
      Batch b = make_batch(data, plan[bi]);
      auto abort = [&](const std::string& why) {
        std::ostringstream msg;
        msg << why << " at epoch " << e << ", batch " << bi << " (" << plan[bi].size() << " items; groups:";
        for (std::size_t k = 0; k < std::min<std::size_t>(plan[bi].size(), 8); ++k)
          msg << ' ' << data.group_keys[static_cast<std::size_t>(data.items[plan[bi][k]].group)];
        msg << (plan[bi].size() > 8 ? " ...)" : ")");
        throw TrainingError(msg.str());
      };
      ForwardResult fr;
      try {
        fr = batch_loss(res.params, b, hp.temperature, &g);
      } catch (const std::domain_error& err) {
        // a NaN or collapsed projection surfaces as a zero/non-finite norm
        abort(std::string("non-finite loss (") + err.what() + ")");
      }
      if (!std::isfinite(fr.loss)) abort("non-finite loss");
      total += fr.loss;
      detail::apply_update(res.params, g, hp, st);
    }
    EpochLog log{e, total / static_cast<double>(plan.size()), plan.size()};
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return res;
}

// ---------------------------------------------------------------- cross-validation

/// Fraction of items whose refined sentence is closest (cosine) to its own
/// group's aggregated word set among the groups present in `items`.
inline double retrieval_accuracy(const EmbeddedSet& data, const FoCusNetParams& p,
                                 const std::vector<std::size_t>& items) {
  if (items.empty()) return 0.0;
  std::map<std::int64_t, std::size_t> group_row;
  std::vector<Vector> group_vecs;
  for (auto i : items) {
    const auto& it = data.items[i];
    if (group_row.contains(it.group)) continue;
    std::vector<Vector> ws;
    for (int w : it.words) ws.push_back(data.words.row(w).transpose());
    group_row[it.group] = group_vecs.size();
    group_vecs.push_back(aggregate_words(ws, p));
  }
  Matrix G(static_cast<Eigen::Index>(group_vecs.size()), p.proj_dim());
  for (std::size_t k = 0; k < group_vecs.size(); ++k) G.row(static_cast<Eigen::Index>(k)) = group_vecs[k].transpose();
  std::size_t hit = 0;
  for (auto i : items) {
    const auto& it = data.items[i];
    Vector s = refine_sentence(data.sentences.row(it.sentence).transpose(), p);
    Vector sims = G * s;
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < sims.size(); ++k)
      if (sims[k] > sims[best]) best = k;
    if (static_cast<std::size_t>(best) == group_row[it.group]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(items.size());
}

/// Fold of each group id: sorted keys, seeded shuffle, round-robin.
inline std::vector<int> assign_group_folds(std::size_t n_groups, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  std::vector<std::size_t> order(n_groups);
  for (std::size_t i = 0; i < n_groups; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "folds"));
  rng.shuffle(order);
  std::vector<int> fold(n_groups);
  for (std::size_t r = 0; r < order.size(); ++r) fold[order[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
  return fold;
}

struct CvEntry {
  TrainHyperparams hp;
  std::vector<double> fold_scores;
  double mean_score = 0.0;
};

struct CvReport {
  std::vector<CvEntry> entries;
  std::size_t best = 0;
  const TrainHyperparams& best_hp() const { return entries.at(best).hp; }
};

inline CvReport cross_validate(const EmbeddedSet& data, const std::vector<TrainHyperparams>& grid,
                               int k = 4, std::uint64_t seed = 0) {
  if (grid.empty()) throw std::invalid_argument("cross_validate: empty grid");
  if (data.group_count() < static_cast<std::size_t>(k))
    throw std::invalid_argument("cross_validate: need at least " + std::to_string(k) +
                                " distinct word-list groups, got " + std::to_string(data.group_count()));
  auto fold_of_group = assign_group_folds(data.group_count(), k, seed);
  std::vector<std::vector<std::size_t>> fold_items(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < data.items.size(); ++i)
    fold_items[static_cast<std::size_t>(fold_of_group[static_cast<std::size_t>(data.items[i].group)])].push_back(i);
  for (int f = 0; f < k; ++f)
    if (fold_items[static_cast<std::size_t>(f)].empty())
      throw std::invalid_argument("cross_validate: fold " + std::to_string(f) + " has no validation groups");

  CvReport rep;
  for (const auto& hp : grid) {
    CvEntry e{hp, {}, 0.0};
    for (int f = 0; f < k; ++f) {
      std::vector<std::size_t> train;
      for (int o = 0; o < k; ++o)
        if (o != f) train.insert(train.end(), fold_items[static_cast<std::size_t>(o)].begin(), fold_items[static_cast<std::size_t>(o)].end());
      std::sort(train.begin(), train.end());
      auto res = train_encoder(data, hp, train);
      e.fold_scores.push_back(retrieval_accuracy(data, res.params, fold_items[static_cast<std::size_t>(f)]));
    }
    double s = 0;
    for (double x : e.fold_scores) s += x;
    e.mean_score = s / k;
    rep.entries.push_back(std::move(e));
  }
  for (std::size_t i = 1; i < rep.entries.size(); ++i)
    if (rep.entries[i].mean_score > rep.entries[rep.best].mean_score) rep.best = i;
  return rep;
}

inline nlohmann::ordered_json to_json(const CvReport& r) {
  nlohmann::ordered_json j;
  j["best"] = to_json(r.best_hp());
  j["best_index"] = r.best;
  auto& arr = j["configs"] = nlohmann::ordered_json::array();
  for (const auto& e : r.entries)
    arr.push_back({{"hyperparams", to_json(e.hp)}, {"fold_scores", e.fold_scores}, {"mean_score", e.mean_score}});
  return j;
}

}  // namespace lscg::focusnet
