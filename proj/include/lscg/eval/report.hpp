#pragma once

// Run directories and summary tables.
//
// A run directory holds verdicts.jsonl and run.json (written by `lscg eval`);
// report outputs are report.md, metrics.csv and parsing_hist.csv.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/corpus.hpp"
#include "lscg/eval/metrics.hpp"
#include "lscg/llm/harness.hpp"
#include "lscg/morphology.hpp"

namespace lscg::eval {

namespace fs = std::filesystem;

struct RunSummary {
  fs::path dir;
  std::string strategy;
  std::size_t pool_size = 0;
  std::string dataset_version;
  ClassificationReport classification;
  ParsingReport parsing;
  bool has_word_lists = false;
  std::optional<double> mean_k;         // focusnet runs
  std::optional<double> mean_k_recall;  // fraction of W kept in k, invalid samples
};

inline nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError(p.string() + " is not valid JSON");
  return j;
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << s;
}

/// Fraction of W (by stem key) present in k.
inline double k_recall(const std::vector<std::string>& k, const std::vector<std::string>& w) {
  std::set<std::string> kk, ww;
  for (const auto& x : k) kk.insert(morph::word_key(x));
  for (const auto& x : w) ww.insert(morph::word_key(x));
  if (ww.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& x : ww) hit += kk.contains(x);
  return static_cast<double>(hit) / static_cast<double>(ww.size());
}

inline RunSummary summarize(const std::vector<llm::Verdict>& verdicts,
                            const std::vector<WordsCheckerSample>& samples) {
  RunSummary s;
  s.classification = classification_metrics(verdicts, samples);
  s.parsing = parsing_report(verdicts, samples);
  s.pool_size = samples.empty() ? 0 : samples.front().forbidden_pool.size();
  auto idx = index_by_id(samples);
  double ksum = 0, rsum = 0;
  std::size_t kn = 0, rn = 0;
  for (const auto& v : verdicts) {
    if (v.predicted_words) s.has_word_lists = true;
    if (!v.reduced_set) continue;
    ksum += static_cast<double>(v.reduced_set->size());
    ++kn;
    const auto* smp = idx.at(v.sentence_id);
    if (smp->label == Label::invalid) {
      rsum += k_recall(*v.reduced_set, smp->contained_words);
      ++rn;
    }
  }
  if (kn) s.mean_k = ksum / static_cast<double>(kn);
  if (rn) s.mean_k_recall = rsum / static_cast<double>(rn);
  if (!verdicts.empty()) s.strategy = verdicts.front().strategy;
  return s;
}

inline RunSummary summarize_run(const fs::path& dir) {
  auto meta = read_json_file(dir / "run.json");
  fs::path dataset = meta.at("dataset").get<std::string>();
  if (dataset.is_relative()) dataset = dir / dataset;
  auto samples = corpus::read_samples(dataset);
  auto verdicts = llm::read_verdicts(dir / "verdicts.jsonl");
  RunSummary s = summarize(verdicts, samples);
  s.dir = dir;
  s.strategy = meta.at("strategy").get<std::string>();
  s.dataset_version = meta.value("dataset_version", corpus::dataset_version(dataset));
  return s;
}

inline std::string pct(const Rate& r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%s", 100.0 * r.value, r.undefined ? "*" : "");
  return buf;
}

inline std::string fixed(double x, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::string metrics_csv(const std::vector<RunSummary>& runs) {
  std::string out =
      "strategy,pool_size,n,accuracy,recall,precision,tp,fp,tn,fn,parse_failures,endpoint_failures,"
      "accuracy_undefined,recall_undefined,precision_undefined,mean_k,mean_k_recall\n";
  for (const auto& r : runs) {
    const auto& c = r.classification;
    out += r.strategy + "," + std::to_string(r.pool_size) + "," + std::to_string(c.total()) + "," +
           fixed(c.accuracy.value, 6) + "," + fixed(c.recall.value, 6) + "," + fixed(c.precision.value, 6) + "," +
           std::to_string(c.tp) + "," + std::to_string(c.fp) + "," + std::to_string(c.tn) + "," +
           std::to_string(c.fn) + "," + std::to_string(c.parse_failures) + "," +
           std::to_string(c.endpoint_failures) + "," + (c.accuracy.undefined ? "1" : "0") + "," +
           (c.recall.undefined ? "1" : "0") + "," + (c.precision.undefined ? "1" : "0") + "," +
           (r.mean_k ? fixed(*r.mean_k, 4) : "") + "," + (r.mean_k_recall ? fixed(*r.mean_k_recall, 6) : "") +
           "\n";
  }
  return out;
}

/// Strategy rows × (pool size × {Acc, Rec, Prec}) columns, then a failures /
/// reduced-set table. Strategies keep first-seen order; pool sizes ascend.
inline std::string markdown_report(const std::vector<RunSummary>& runs) {
  std::vector<std::string> strategies;
  std::set<std::size_t> pools;
  std::map<std::pair<std::string, std::size_t>, const RunSummary*> cell;
  for (const auto& r : runs) {
    if (std::find(strategies.begin(), strategies.end(), r.strategy) == strategies.end())
      strategies.push_back(r.strategy);
    pools.insert(r.pool_size);
    cell[{r.strategy, r.pool_size}] = &r;
  }
  std::ostringstream md;
  md << "# Words Checker results\n\n";
  if (!runs.empty()) md << "Dataset version: `" << runs.front().dataset_version << "`\n\n";
  md << "| Strategy |";
  for (auto p : pools) md << " F=" << p << " Acc | F=" << p << " Rec | F=" << p << " Prec |";
  md << "\n|---|";
  for (std::size_t i = 0; i < pools.size(); ++i) md << "---:|---:|---:|";
  md << "\n";
  for (const auto& s : strategies) {
    md << "| " << s << " |";
    for (auto p : pools) {
      auto it = cell.find({s, p});
      if (it == cell.end()) {
        md << " - | - | - |";
        continue;
      }
      const auto& c = it->second->classification;
      md << " " << pct(c.accuracy) << " | " << pct(c.recall) << " | " << pct(c.precision) << " |";
    }
    md << "\n";
  }
  md << "\nRates in %, positive class = invalid. Unparsed answers are excluded from the rates. "
        "`*` marks a 0/0 rate reported as 0.\n\n";
  md << "| Strategy | F | n | parse failures | endpoint failures | mean \\|k\\| | W kept in k |\n";
  md << "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& s : strategies)
    for (auto p : pools) {
      auto it = cell.find({s, p});
      if (it == cell.end()) continue;
      const auto& r = *it->second;
      md << "| " << s << " | " << p << " | " << r.classification.total() << " | "
         << r.classification.parse_failures << " | " << r.classification.endpoint_failures << " | "
         << (r.mean_k ? fixed(*r.mean_k) : "-") << " | "
         << (r.mean_k_recall ? fixed(100.0 * *r.mean_k_recall) + "%" : "-") << " |\n";
    }
  bool any_parsing = false;
  for (const auto& r : runs) any_parsing |= r.has_word_lists;
  if (any_parsing) {
    md << "\n| Strategy | F | parsing precision | parsing recall | sentences |\n|---|---:|---:|---:|---:|\n";
    for (const auto& r : runs)
      if (r.has_word_lists)
        md << "| " << r.strategy << " | " << r.pool_size << " | " << fixed(100.0 * r.parsing.mean_precision)
           << " | " << fixed(100.0 * r.parsing.mean_recall) << " | " << r.parsing.pairs.size() << " |\n";
  }
  return md.str();
}

/// Fails on mixed dataset versions or a repeated (strategy, pool size) cell.
inline void check_consistent(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw std::invalid_argument("report: no runs");
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& r : runs) {
    if (r.dataset_version != runs.front().dataset_version)
      throw DataError("mixed dataset versions: '" + runs.front().dataset_version + "' (" +
                      runs.front().dir.string() + ") vs '" + r.dataset_version + "' (" + r.dir.string() + ")");
    if (!seen.insert({r.strategy, r.pool_size}).second)
      throw DataError("two runs for strategy " + r.strategy + " at F=" + std::to_string(r.pool_size));
  }
}

inline void write_outputs(const fs::path& out_dir, const std::vector<RunSummary>& runs) {
  fs::create_directories(out_dir);
  write_text(out_dir / "report.md", markdown_report(runs));
  write_text(out_dir / "metrics.csv", metrics_csv(runs));
  std::vector<std::pair<std::string, ParsingScore>> all;
  for (const auto& r : runs) all.insert(all.end(), r.parsing.pairs.begin(), r.parsing.pairs.end());
  write_text(out_dir / "parsing_hist.csv", histogram_csv(distribution_report(std::move(all))));
}

inline std::vector<RunSummary> report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  std::vector<RunSummary> runs;
  for (const auto& d : run_dirs) runs.push_back(summarize_run(d));
  check_consistent(runs);
  write_outputs(out_dir, runs);
  return runs;
}

}  // namespace lscg::eval
