#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "lscg/corpus.hpp"
#include "lscg/embedding.hpp"
#include "lscg/errors.hpp"
#include "lscg/eval/metrics.hpp"
#include "lscg/eval/report.hpp"
#include "lscg/focusnet/pipeline.hpp"
#include "lscg/llm/harness.hpp"
#include "lscg/log.hpp"
#include "lscg/morphology.hpp"
#include "lscg/synth_corpus.hpp"

namespace lscg::cli {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

/// "section.key" -> raw inputs, from the TOML config file.
using ConfigMap = std::map<std::string, std::vector<std::string>>;

ConfigMap load_config(const std::string& path) {
  ConfigMap m;
  if (path.empty()) return m;
  if (!fs::exists(path)) throw CLI::FileError::Missing(path);
  for (const auto& item : CLI::ConfigTOML().from_file(path)) {
    std::string key = item.fullname();
    std::replace(key.begin(), key.end(), '-', '_');
    m[key] = item.inputs;
  }
  return m;
}

/// Fills options not given on the command line from the listed config sections.
void apply_config(CLI::App* sub, const ConfigMap& cfg, const std::vector<std::string>& sections) {
  if (cfg.empty()) return;
  for (CLI::Option* opt : sub->get_options()) {
    if (opt->count() > 0 || opt->get_lnames().empty()) continue;
    std::string key = opt->get_lnames().front();
    std::replace(key.begin(), key.end(), '-', '_');
    for (const auto& s : sections) {
      auto it = cfg.find(s + "." + key);
      if (it == cfg.end()) continue;
      opt->add_result(it->second);
      opt->run_callback();
      break;
    }
  }
}

void need(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

double secs_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// ---------------------------------------------------------------- shared option groups

struct EmbedOpts {
  std::string provider;
  std::string cache_dir;
  std::size_t remote_dim = 768;
};

void add_embed_opts(CLI::App* app, EmbedOpts& o, bool provider_from_checkpoint = false) {
  app->add_option("--provider", o.provider,
                  provider_from_checkpoint ? "Embedding provider id (default: the checkpoint's)"
                                           : "Embedding provider id (mock:ngram-v1[:DIM], remote:<model>, local:<path>)");
  app->add_option("--cache-dir", o.cache_dir, "Persistent embedding cache directory");
  app->add_option("--embed-dim", o.remote_dim, "Vector size returned by a remote provider")->capture_default_str();
}

std::shared_ptr<embed::Embedder> make_embedder(const EmbedOpts& o) {
  need(o.provider, "--provider");
  embed::ProviderOptions po;
  po.remote_dim = o.remote_dim;
  auto provider = embed::make_provider(o.provider, po);
  std::optional<embed::EmbeddingCache> cache;
  if (!o.cache_dir.empty()) cache.emplace(o.cache_dir);
  return std::make_shared<embed::Embedder>(provider, std::move(cache));
}

void write_json(const fs::path& p, const nlohmann::ordered_json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- synth-corpus

struct SynthArgs {
  std::string out;
  synth::SynthConfig cfg;
};

int cmd_synth(const SynthArgs& a) {
  need(a.out, "--out");
  auto counts = synth::write_corpus(a.out, a.cfg);
  for (const auto& [p, n] : counts) fmt::print("{}: {} rows\n", to_string(p), n);
  return kExitOk;
}

// ---------------------------------------------------------------- datagen

struct DatagenArgs {
  std::string corpus_dir;
  std::vector<std::size_t> pool_sizes{10, 100, 500, 1000};
  std::uint64_t seed = 42;
  std::size_t count = corpus::kScenarioSize;
  std::string out;
};

int cmd_datagen(const DatagenArgs& a) {
  need(a.corpus_dir, "--corpus-dir");
  need(a.out, "--out");
  auto t0 = Clock::now();
  auto parts = corpus::load_corpus_dir(a.corpus_dir);
  auto vocab = corpus::build_vocabulary(corpus::concat(
      parts, {Partition::train, Partition::validation, Partition::challenge_train, Partition::challenge_validation}));
  auto challenge = corpus::concat(parts, {Partition::challenge_train, Partition::challenge_validation});
  auto assignment = corpus::assign_sentences(challenge, a.seed, a.count);
  fs::create_directories(a.out);

  std::vector<std::size_t> sizes = a.pool_sizes;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (auto f : sizes) {
    auto samples = corpus::generate_words_checker(challenge, assignment, vocab, f, a.seed);
    std::string name = corpus::scenario_filename(f);
    corpus::write_samples(fs::path(a.out) / name, samples);
    std::size_t invalid = 0;
    for (const auto& s : samples) invalid += s.label == Label::invalid;
    files[name] = {{"pool_size", f}, {"samples", samples.size()}, {"invalid", invalid}};
    fmt::print("{}: {} samples, invalid fraction {:.3f}\n", name, samples.size(),
               static_cast<double>(invalid) / static_cast<double>(samples.size()));
  }
  nlohmann::ordered_json manifest;
  manifest["generator"] = std::string(corpus::kGeneratorVersion);
  manifest["seed"] = a.seed;
  manifest["samples_per_scenario"] = a.count;
  manifest["vocabulary_size"] = vocab.size();
  manifest["assignment_fingerprint"] = corpus::assignment_fingerprint(challenge, assignment);
  manifest["files"] = files;
  write_json(fs::path(a.out) / "manifest.json", manifest);
  fmt::print("done in {:.1f}s\n", secs_since(t0));
  return kExitOk;
}

// ---------------------------------------------------------------- augment

struct AugmentArgs {
  std::string corpus_dir;
  std::uint64_t seed = 42;
  std::string out;
};

int cmd_augment(const AugmentArgs& a) {
  need(a.corpus_dir, "--corpus-dir");
  need(a.out, "--out");
  auto parts = corpus::load_corpus_dir(a.corpus_dir);
  auto vocab = corpus::build_vocabulary(corpus::concat(
      parts, {Partition::train, Partition::validation, Partition::challenge_train, Partition::challenge_validation}));
  corpus::AugmentStats st;
  auto triplets = corpus::augment_training_set(corpus::concat(parts, {Partition::train, Partition::validation}),
                                               vocab, a.seed, &st);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  corpus::write_triplets(a.out, triplets);
  fmt::print("{} triplets ({} positive, {} negative) from {} entries; {} entries skipped (no verified concept)\n",
             triplets.size(), st.positives, st.negatives, st.entries_used, st.entries_skipped);
  return kExitOk;
}

// ---------------------------------------------------------------- oracle-check

int cmd_oracle_check(const std::vector<std::string>& datasets) {
  if (datasets.empty()) throw CLI::RequiredError("--dataset");
  std::size_t total_mismatch = 0;
  for (const auto& file : datasets) {
    auto samples = corpus::read_samples(file);
    std::size_t mismatch = 0;
    for (const auto& s : samples) {
      auto v = morph::oracle_classify(s);
      std::set<std::string> expect, got;
      for (const auto& w : s.contained_words) expect.insert(morph::word_key(w));
      for (const auto& m : v.matched) got.insert(morph::word_key(m));
      if (v.label != s.label || expect != got) {
        ++mismatch;
        if (mismatch <= 5) log::warn(fmt::format("{}: oracle disagrees on {}", file, s.sentence_id));
      }
    }
    fmt::print("{}: {} samples, {} mismatches\n", file, samples.size(), mismatch);
    total_mismatch += mismatch;
  }
  return total_mismatch == 0 ? kExitOk : kExitData;
}

// ---------------------------------------------------------------- embed-warm

int cmd_embed_warm(const std::vector<std::string>& datasets, const EmbedOpts& eo) {
  if (datasets.empty()) throw CLI::RequiredError("--dataset");
  if (eo.cache_dir.empty()) throw CLI::RequiredError("--cache-dir");
  auto em = make_embedder(eo);
  std::vector<std::string> texts;
  std::set<std::string> seen;
  auto add = [&](const std::string& t) {
    if (!text::trim(t).empty() && seen.insert(t).second) texts.push_back(t);
  };
  for (const auto& file : datasets) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (text::trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw IngestionError(file, n, "invalid JSON");
      if (j.contains("sentence")) add(j["sentence"].get<std::string>());
      if (j.contains("target")) add(j["target"].get<std::string>());
      for (const char* key : {"forbidden_pool", "words", "concepts"})
        if (j.contains(key))
          for (const auto& w : j[key]) add(text::normalize_word(w.get<std::string>()));
    }
  }
  auto t0 = Clock::now();
  for (std::size_t i = 0; i < texts.size(); i += 512) {
    std::vector<std::string> chunk(texts.begin() + static_cast<std::ptrdiff_t>(i),
                                   texts.begin() + static_cast<std::ptrdiff_t>(std::min(texts.size(), i + 512)));
    em->embed_batch(chunk);
  }
  fmt::print("{} texts: {} cache hits, {} computed ({:.1f}s)\n", texts.size(), em->cache_hits(), em->cache_misses(),
             secs_since(t0));
  return kExitOk;
}

// ---------------------------------------------------------------- train / cv-search

struct TrainArgs {
  std::string triplets;
  std::string out;
  EmbedOpts embed;
  focusnet::PipelineConfig pipe;
  std::string optimizer = "adam";
};

void add_hyperparam_opts(CLI::App* app, focusnet::TrainHyperparams& hp, std::string& optimizer) {
  app->add_option("--proj-dim", hp.proj_dim, "Projection size d")->capture_default_str();
  app->add_option("--learning-rate", hp.learning_rate, "Learning rate")->capture_default_str();
  app->add_option("--temperature", hp.temperature, "InfoNCE temperature")->capture_default_str();
  app->add_option("--epochs", hp.epochs, "Training epochs")->capture_default_str();
  app->add_option("--batch-size", hp.batch_size, "Items per batch")->capture_default_str();
  app->add_option("--seed", hp.seed, "Training seed")->capture_default_str();
  app->add_option("--optimizer", optimizer, "adam or sgd")->capture_default_str();
}

int cmd_train(TrainArgs a) {
  need(a.triplets, "--triplets");
  need(a.out, "--out");
  if (a.embed.provider.empty()) a.embed.provider = "mock:ngram-v1";
  a.pipe.hp.optimizer = focusnet::parse_optimizer(a.optimizer);
  auto em = make_embedder(a.embed);
  auto triplets = corpus::read_triplets(a.triplets);
  auto t0 = Clock::now();
  auto r = focusnet::train_pipeline(triplets, *em, a.pipe, [](const std::string& m) { log::info(m); });
  focusnet::save_checkpoint(a.out, r, a.pipe);
  fmt::print("trained on {} triplets ({} held out): loss {:.4f} -> {:.4f}, forest train acc {:.4f}, holdout acc {:.4f} "
             "({:.1f}s)\n",
             r.train_triplets, r.holdout_triplets, r.epochs.empty() ? 0.0 : r.epochs.front().mean_loss,
             r.epochs.empty() ? 0.0 : r.epochs.back().mean_loss, r.train_accuracy, r.holdout_accuracy,
             secs_since(t0));
  return kExitOk;
}

struct CvArgs {
  std::string triplets;
  std::string grid;
  std::string out;
  EmbedOpts embed;
  focusnet::TrainHyperparams base;
  std::string optimizer = "adam";
  int folds = 4;
  std::uint64_t fold_seed = 0;
  std::size_t max_triplets = 0;
};

int cmd_cv(CvArgs a) {
  need(a.triplets, "--triplets");
  if (a.embed.provider.empty()) a.embed.provider = "mock:ngram-v1";
  a.base.optimizer = focusnet::parse_optimizer(a.optimizer);
  nlohmann::json grid = focusnet::default_grid();
  if (!a.grid.empty()) grid = eval::read_json_file(a.grid);
  auto configs = focusnet::expand_grid(grid, a.base);
  auto em = make_embedder(a.embed);
  auto triplets = focusnet::subsample(corpus::read_triplets(a.triplets), a.max_triplets, a.fold_seed);
  auto data = focusnet::embed_positive_triplets(triplets, *em);
  log::info(fmt::format("{} configs x {} folds over {} groups", configs.size(), a.folds, data.group_count()));
  auto rep = focusnet::cross_validate(data, configs, a.folds, a.fold_seed);
  for (std::size_t i = 0; i < rep.entries.size(); ++i) {
    const auto& e = rep.entries[i];
    fmt::print("{} d={} lr={} tau={} epochs={} mean={:.4f}\n", i == rep.best ? "*" : " ", e.hp.proj_dim,
               e.hp.learning_rate, e.hp.temperature, e.hp.epochs, e.mean_score);
  }
  if (!a.out.empty()) write_json(a.out, focusnet::to_json(rep));
  return kExitOk;
}

// ---------------------------------------------------------------- mask

struct MaskArgs {
  std::string checkpoint;
  std::string dataset;
  std::string out;
  EmbedOpts embed;
  double threshold = 0.5;
  std::size_t group_size = 1;
};

std::shared_ptr<focusnet::FocusNet> load_focusnet(const std::string& dir, EmbedOpts eo) {
  auto ck = focusnet::load_checkpoint(dir);
  if (eo.provider.empty()) eo.provider = ck.params.provider_id;
  return std::make_shared<focusnet::FocusNet>(std::move(ck.params), std::move(ck.forest), make_embedder(eo));
}

int cmd_mask(const MaskArgs& a) {
  need(a.checkpoint, "--checkpoint");
  need(a.dataset, "--dataset");
  auto fn = load_focusnet(a.checkpoint, a.embed);
  auto samples = corpus::read_samples(a.dataset);
  std::ofstream out;
  if (!a.out.empty()) {
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    out.open(a.out, std::ios::binary | std::ios::trunc);
  }
  double ksum = 0, rsum = 0;
  std::size_t rn = 0;
  auto t0 = Clock::now();
  for (const auto& s : samples) {
    auto m = fn->build_mask(s.sentence, s.forbidden_pool, a.threshold, a.group_size);
    ksum += static_cast<double>(m.k.size());
    if (s.label == Label::invalid) {
      rsum += eval::k_recall(m.k, s.contained_words);
      ++rn;
    }
    if (out.is_open()) {
      nlohmann::ordered_json j;
      j["sentence_id"] = s.sentence_id;
      j["k"] = m.k;
      j["mask"] = m.mask;
      out << j.dump() << '\n';
    }
  }
  fmt::print("{} samples: mean |k| {:.2f}, W kept in k {:.4f} ({:.1f}s)\n", samples.size(),
             samples.empty() ? 0.0 : ksum / static_cast<double>(samples.size()),
             rn ? rsum / static_cast<double>(rn) : 0.0, secs_since(t0));
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string dataset;
  std::string strategy;
  std::string endpoint;
  std::string model;
  int parallel = 4;
  std::string out;
  std::string checkpoint;
  EmbedOpts embed;
  double threshold = 0.5;
  std::size_t group_size = 1;
  double temperature = -1;
  int max_tokens = 4096;
  int n_judges = 3;
  std::size_t limit = 0;
  int retries = 3;
  int timeout_s = 120;
};

int cmd_eval(const EvalArgs& a) {
  need(a.dataset, "--dataset");
  need(a.strategy, "--strategy");
  need(a.endpoint, "--endpoint");
  need(a.model, "--model");
  need(a.out, "--out");
  auto cfg = llm::parse_strategy(a.strategy);
  cfg.model = a.model;
  cfg.max_tokens = a.max_tokens;
  if (cfg.kind == llm::StrategyKind::best_of_n && a.strategy == "best_of_n") cfg.n_judges = a.n_judges;
  if (a.temperature >= 0) cfg.temperature = a.temperature;
  cfg.mask_threshold = a.threshold;
  cfg.mask_group_size = a.group_size;
  cfg.validate();

  auto samples = corpus::read_samples(a.dataset);
  if (a.limit > 0 && a.limit < samples.size()) samples.resize(a.limit);
  std::shared_ptr<focusnet::FocusNet> fn;
  if (cfg.kind == llm::StrategyKind::focusnet) {
    need(a.checkpoint, "--checkpoint");
    fn = load_focusnet(a.checkpoint, a.embed);
  }
  http::RetryPolicy retry;
  retry.attempts = a.retries;
  retry.timeout = std::chrono::seconds(a.timeout_s);
  const char* key = std::getenv("LSCG_API_KEY");
  llm::OpenAIChatEndpoint ep(a.endpoint, key ? key : "", retry);

  auto t0 = Clock::now();
  llm::RunOptions ro;
  ro.parallel = a.parallel;
  ro.progress = [&](std::size_t d, std::size_t n) {
    if (d % 50 == 0 || d == n) log::info(fmt::format("{}/{} samples", d, n));
  };
  auto verdicts = llm::run_all(samples, cfg, ep, fn.get(), ro);

  fs::create_directories(a.out);
  llm::write_verdicts(fs::path(a.out) / "verdicts.jsonl", verdicts);
  nlohmann::ordered_json run;
  run["strategy"] = llm::strategy_name(cfg);
  run["model"] = cfg.model;
  run["endpoint"] = ep.url();
  run["dataset"] = fs::absolute(a.dataset).string();
  run["dataset_version"] = corpus::dataset_version(a.dataset);
  run["pool_size"] = samples.empty() ? 0 : samples.front().forbidden_pool.size();
  run["samples"] = samples.size();
  run["parallel"] = a.parallel;
  run["temperature"] = cfg.temperature;
  run["max_tokens"] = cfg.max_tokens;
  if (cfg.kind == llm::StrategyKind::best_of_n) run["n_judges"] = cfg.n_judges;
  if (cfg.kind == llm::StrategyKind::listwords) run["prompt_version"] = std::string(llm::kListWordsVersion);
  if (fn) {
    run["checkpoint"] = fs::absolute(a.checkpoint).string();
    run["threshold"] = cfg.mask_threshold;
    run["group_size"] = cfg.mask_group_size;
  }
  run["elapsed_s"] = secs_since(t0);
  write_json(fs::path(a.out) / "run.json", run);

  // incremental tally vs. recomputation from the written files
  eval::ClassificationAccumulator acc;
  auto idx = eval::index_by_id(samples);
  for (const auto& v : verdicts) acc.add(v, idx.at(v.sentence_id)->label);
  auto summary = eval::summarize_run(a.out);
  if (!summary.classification.same_counts(acc.report()))
    throw IntegrityError("metrics recomputed from " + a.out + " differ from the live tally");
  eval::write_outputs(a.out, {summary});

  const auto& c = summary.classification;
  fmt::print("{} on {} samples: acc {} rec {} prec {} | parse failures {} | endpoint failures {}\n",
             llm::strategy_name(cfg), c.total(), eval::pct(c.accuracy), eval::pct(c.recall), eval::pct(c.precision),
             c.parse_failures, c.endpoint_failures);
  return c.endpoint_failures > 0 ? kExitEndpoint : kExitOk;
}

// ---------------------------------------------------------------- report

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  if (runs.empty()) throw CLI::RequiredError("--runs");
  need(out, "--out");
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  auto summaries = eval::report(dirs, out);
  std::cout << eval::markdown_report(summaries);
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Words Checker benchmark toolkit: datasets, FoCusNet filter, LLM steering harness, metrics"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  std::string log_level = "info";
  app.add_option("--config", config_file, "TOML config with [corpus] [embedding] [train] [eval] sections");
  app.add_option("--log-level", log_level, "debug, info, warn or error")->capture_default_str();

  SynthArgs synth_a;
  auto* synth = app.add_subcommand("synth-corpus", "Write a deterministic synthetic CommonGen-style corpus");
  synth->add_option("--out", synth_a.out, "Output directory");
  synth->add_option("--seed", synth_a.cfg.seed, "Seed")->capture_default_str();
  synth->add_option("--roots", synth_a.cfg.n_roots, "Vocabulary roots")->capture_default_str();
  synth->add_option("--train-sets", synth_a.cfg.train_sets, "Concept sets in train")->capture_default_str();
  synth->add_option("--validation-sets", synth_a.cfg.validation_sets, "Concept sets in validation")->capture_default_str();
  synth->add_option("--challenge-sets", synth_a.cfg.challenge_train, "Rows in each challenge partition")
      ->capture_default_str();

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "Generate the Words Checker scenarios");
  datagen->add_option("--corpus-dir", dg.corpus_dir, "Directory with <partition>.jsonl files");
  datagen->add_option("--pool-size", dg.pool_sizes, "Forbidden pool sizes (repeatable or comma list)")
      ->delimiter(',')
      ->capture_default_str();
  datagen->add_option("--seed", dg.seed, "Generation seed")->capture_default_str();
  datagen->add_option("--count", dg.count, "Samples per scenario")->capture_default_str();
  datagen->add_option("--out", dg.out, "Output directory");

  AugmentArgs ag;
  auto* augment = app.add_subcommand("augment", "Build augmented FoCusNet training triplets");
  augment->add_option("--corpus-dir", ag.corpus_dir, "Directory with <partition>.jsonl files");
  augment->add_option("--seed", ag.seed, "Augmentation seed")->capture_default_str();
  augment->add_option("--out", ag.out, "Output triplets file (JSON lines)");

  std::vector<std::string> oracle_ds;
  auto* oracle = app.add_subcommand("oracle-check", "Re-label datasets with the morphology oracle");
  oracle->add_option("--dataset", oracle_ds, "Dataset file(s)");

  std::vector<std::string> warm_ds;
  EmbedOpts warm_eo;
  auto* warm = app.add_subcommand("embed-warm", "Prefill the embedding cache");
  warm->add_option("--dataset", warm_ds, "Dataset, triplet or corpus file(s)");
  add_embed_opts(warm, warm_eo);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the FoCusNet encoder and forest");
  train->add_option("--triplets", tr.triplets, "Training triplets file");
  train->add_option("--out", tr.out, "Checkpoint directory");
  add_embed_opts(train, tr.embed);
  add_hyperparam_opts(train, tr.pipe.hp, tr.optimizer);
  train->add_option("--holdout", tr.pipe.holdout_fraction, "Fraction of sentences held out")->capture_default_str();
  train->add_option("--max-triplets", tr.pipe.max_triplets, "Seeded subsample size (0: all)")->capture_default_str();
  train->add_option("--split-seed", tr.pipe.split_seed, "Seed of subsample and holdout split")->capture_default_str();
  train->add_option("--trees", tr.pipe.forest.n_trees, "Forest size")->capture_default_str();
  train->add_option("--max-depth", tr.pipe.forest.max_depth, "Tree depth limit")->capture_default_str();
  train->add_option("--min-samples-leaf", tr.pipe.forest.min_samples_leaf, "Minimum samples per leaf")
      ->capture_default_str();
  train->add_option("--forest-seed", tr.pipe.forest.seed, "Forest seed")->capture_default_str();

  CvArgs cv;
  auto* cvs = app.add_subcommand("cv-search", "Grouped K-fold hyperparameter search");
  cvs->add_option("--triplets", cv.triplets, "Training triplets file");
  cvs->add_option("--grid", cv.grid, "JSON grid {proj_dim:[..], learning_rate:[..], temperature:[..], epochs:[..]}");
  cvs->add_option("--out", cv.out, "Report file (JSON)");
  cvs->add_option("--folds", cv.folds, "Number of folds")->capture_default_str();
  cvs->add_option("--fold-seed", cv.fold_seed, "Seed of the fold assignment")->capture_default_str();
  cvs->add_option("--max-triplets", cv.max_triplets, "Seeded subsample size (0: all)")->capture_default_str();
  add_embed_opts(cvs, cv.embed);
  add_hyperparam_opts(cvs, cv.base, cv.optimizer);

  MaskArgs mk;
  auto* mask = app.add_subcommand("mask", "Reduce each sample's pool to the relevant subset k");
  mask->add_option("--checkpoint", mk.checkpoint, "Checkpoint directory");
  mask->add_option("--dataset", mk.dataset, "Dataset file");
  mask->add_option("--threshold", mk.threshold, "Forest probability threshold")->capture_default_str();
  mask->add_option("--group-size", mk.group_size, "Pool words scored together")->capture_default_str();
  mask->add_option("--out", mk.out, "Per-sample masks (JSON lines)");
  add_embed_opts(mask, mk.embed, true);

  EvalArgs ev;
  auto* evalc = app.add_subcommand("eval", "Run a steering strategy against a chat endpoint");
  evalc->add_option("--dataset", ev.dataset, "Dataset file");
  evalc->add_option("--strategy", ev.strategy, "simple, cot, best3 (bestN), focusnet or listwords");
  evalc->add_option("--endpoint", ev.endpoint, "Base URL of an OpenAI-compatible server");
  evalc->add_option("--model", ev.model, "Model name sent with each request");
  evalc->add_option("--parallel", ev.parallel, "Samples in flight")->capture_default_str();
  evalc->add_option("--out", ev.out, "Run directory");
  evalc->add_option("--checkpoint", ev.checkpoint, "FoCusNet checkpoint (focusnet strategy)");
  evalc->add_option("--threshold", ev.threshold, "Mask threshold (focusnet strategy)")->capture_default_str();
  evalc->add_option("--group-size", ev.group_size, "Mask group size (focusnet strategy)")->capture_default_str();
  evalc->add_option("--temperature", ev.temperature, "Override the strategy temperature");
  evalc->add_option("--max-tokens", ev.max_tokens, "Token cap per exchange")->capture_default_str();
  evalc->add_option("--n-judges", ev.n_judges, "Jury size for --strategy best_of_n")->capture_default_str();
  evalc->add_option("--limit", ev.limit, "Evaluate only the first N samples");
  evalc->add_option("--retries", ev.retries, "Attempts per request")->capture_default_str();
  evalc->add_option("--timeout", ev.timeout_s, "Per-request timeout in seconds")->capture_default_str();
  add_embed_opts(evalc, ev.embed, true);

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "Summarize run directories into tables");
  rep->add_option("--runs", report_runs, "Run directories");
  rep->add_option("--out", report_out, "Output directory");

  try {
    app.parse(argc, argv);
    if (log_level == "debug") log::set_level(log::Level::debug);
    else if (log_level == "info") log::set_level(log::Level::info);
    else if (log_level == "warn") log::set_level(log::Level::warn);
    else if (log_level == "error") log::set_level(log::Level::error);
    else throw CLI::ValidationError("--log-level", "unknown level " + log_level);

    auto cfg = load_config(config_file);
    apply_config(synth, cfg, {"corpus"});
    apply_config(datagen, cfg, {"corpus"});
    apply_config(augment, cfg, {"corpus"});
    apply_config(oracle, cfg, {"corpus", "eval"});
    apply_config(warm, cfg, {"embedding"});
    apply_config(train, cfg, {"train", "embedding"});
    apply_config(cvs, cfg, {"train", "embedding"});
    apply_config(mask, cfg, {"train", "embedding"});
    apply_config(evalc, cfg, {"eval", "embedding"});
    apply_config(rep, cfg, {"eval"});
    synth_a.cfg.challenge_validation = synth_a.cfg.challenge_train;

    if (synth->parsed()) return cmd_synth(synth_a);
    if (datagen->parsed()) return cmd_datagen(dg);
    if (augment->parsed()) return cmd_augment(ag);
    if (oracle->parsed()) return cmd_oracle_check(oracle_ds);
    if (warm->parsed()) return cmd_embed_warm(warm_ds, warm_eo);
    if (train->parsed()) return cmd_train(tr);
    if (cvs->parsed()) return cmd_cv(cv);
    if (mask->parsed()) return cmd_mask(mk);
    if (evalc->parsed()) return cmd_eval(ev);
    if (rep->parsed()) return cmd_report(report_runs, report_out);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  } catch (const TransportError& e) {
    log::error(e.what());
    return kExitEndpoint;
  } catch (const DataError& e) {
    log::error(e.what());
    return kExitData;
  } catch (const TrainingError& e) {
    log::error(e.what());
    return kExitData;
  } catch (const std::invalid_argument& e) {
    log::error(e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitUsage;
  }
}

}  // namespace lscg::cli
