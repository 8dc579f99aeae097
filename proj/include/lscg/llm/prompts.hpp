#pragma once

// Task templates and query composition.
//
// A query is "Task: <template>\nSentence: <sentence>\nWords: <w1, w2, ...>".
// Templates keep the original line breaks; trailing spaces are removed.

#include <string>
#include <string_view>
#include <vector>

#include "lscg/text.hpp"

namespace lscg::llm {

inline constexpr std::string_view kSimpleTemplate =
    "Check if the following sentence contains one of the following set of words.\n"
    "Only answer True or False. Enclose your final answer into '<answer></answer>'.\n"
    "\n"
    "For instance, if the sentence contains one of the words, answer:\n"
    "- <answer>True</answer>;\n"
    "- <answer>False</answer> otherwise.";

inline constexpr std::string_view kGuidePhrase = "think step by step";

inline constexpr std::string_view kCotTemplate =
    "Check if the sentence contains one of the following set of words.\n"
    "Only answer True or False. Please, make sure to think step by step.\n"
    "Enclose your final answer into <answer></answer>.\n"
    "\n"
    "For instance, if the sentence contains one of the words, answer:\n"
    "- <answer>True</answer>;\n"
    "- <answer>False</answer> otherwise.";

inline constexpr std::string_view kJudgeTemplate =
    "Check if the following sentence contains one of the following set of words. "
    "Do not include your reasoning process in the answer; Provide a short explanation "
    "(at most 100 words) to justify your answer. Conclude your sentence with "
    "<answer>your answer</answer>, where your answer is either True or False.";

// Slots: {n} jury size, {message} the judges' query, {answers} the judge replies.
inline constexpr std::string_view kFinalTemplate =
    "Give me your final opinion over the verdicts of a jury of {n} LLMs. When prompted the "
    "following message: {message}, a jury of LLMs answered: {answers}. What is your final "
    "verdict? Enclose your final answer into <answer></answer>.\n"
    "\n"
    "For instance, if the sentence contains one of the words, answer:\n"
    "- <answer>True</answer>;\n"
    "- <answer>False</answer> otherwise.";

/// Word-listing variant used for parsing metrics.
inline constexpr std::string_view kListWordsVersion = "listwords-v1";
inline constexpr std::string_view kListWordsTemplate =
    "Check if the following sentence contains one of the following set of words, "
    "also in a morphological variant (e.g. plural or past tense).\n"
    "List every word of the set that the sentence contains, separated by commas.\n"
    "Enclose the list into <answer></answer>; answer <answer></answer> if the sentence "
    "contains none of the words.";

/// Stands in for the word list when the filter keeps no candidate.
inline constexpr std::string_view kEmptyCandidates = "(empty list: no candidate words remain)";

inline std::string format_words(const std::vector<std::string>& words) {
  if (words.empty()) return std::string(kEmptyCandidates);
  return text::join(words, ", ");
}

inline std::string compose(std::string_view task_template, std::string_view sentence,
                           const std::vector<std::string>& words) {
  std::string q = "Task: ";
  q += task_template;
  q += "\nSentence: ";
  q += sentence;
  q += "\nWords: ";
  q += format_words(words);
  return q;
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

/// Judge replies are inserted verbatim as "\n\nJudge i: <reply>" blocks.
inline std::string compose_final(std::string_view judge_query, const std::vector<std::string>& replies) {
  std::string answers;
  for (std::size_t i = 0; i < replies.size(); ++i)
    answers += "\n\nJudge " + std::to_string(i) + ": " + replies[i];
  // {answers} is substituted last so reply text is never rescanned for slots
  std::string out = std::string(kFinalTemplate);
  std::size_t pos = out.find("{n}");
  out.replace(pos, 3, std::to_string(replies.size()));
  pos = out.find("{message}");
  out.replace(pos, 9, judge_query);
  pos = out.find("{answers}", pos + judge_query.size());
  out.replace(pos, 9, answers);
  return out;
}

}  // namespace lscg::llm
