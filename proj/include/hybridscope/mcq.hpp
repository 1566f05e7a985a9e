#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hybridscope/attn_control.hpp"
#include "hybridscope/model.hpp"
#include "hybridscope/tokenizer.hpp"

namespace hybridscope {

struct McqItem {
  std::string context;
  std::vector<std::string> choices;
  int answer = 0;
  /// (context, correct answer text) demonstrations.
  std::vector<std::pair<std::string, std::string>> fewshot;
};

struct McqItemResult {
  int chosen = 0;
  std::vector<double> logliks;
};

struct McqResult {
  std::vector<McqItemResult> items;
  double accuracy = 0.0;
};

struct McqOptions {
  int fewshot_k = 0;
  /// Divide each choice's log-likelihood by its token count.
  bool length_normalized = false;
  ControlOptions control;
};

/// Context and choice are tokenized separately and joined after BOS; the
/// result is the sum of log-softmax scores of the choice tokens, with the
/// policy's prefill settings applied to the whole pass. Throws InvalidInput
/// if the sequence exceeds max_seq_len or the choice is empty.
double choice_loglik(const HybridModel& model, const Tokenizer& tokenizer, std::string_view context,
                     std::string_view choice, const ManipulationPolicy& policy,
                     const ControlOptions& control = {}, int* n_choice_tokens = nullptr);

/// Demonstrations (context followed by answer text) are prepended in file
/// order; the chosen index is the first maximum. Throws InvalidInput on an
/// empty item list or when an item has fewer than fewshot_k demonstrations.
McqResult evaluate_task(const HybridModel& model, const Tokenizer& tokenizer, const std::vector<McqItem>& items,
                        const ManipulationPolicy& policy, const McqOptions& options = {});

/// One JSON object per line: {"context": str, "choices": [str...],
/// "answer": int, "fewshot": [{"context": str, "answer_text": str}...]}.
/// Throws ParseError with the line number.
std::vector<McqItem> parse_task_jsonl(std::string_view text);
std::vector<McqItem> load_task_file(const std::string& path);
std::string task_to_jsonl(const std::vector<McqItem>& items);

/// Copy task: a run of distinct words, then one of them again; the right
/// choice is the word that followed it, distractors never occur in the
/// context. Words carry a trailing space so context and choice pieces agree.
std::vector<McqItem> make_copy_task(std::uint64_t seed, int n_items, int n_choices = 4, int context_words = 12,
                                    int lexicon_size = 64);

/// Vocabulary over every context, choice and demonstration.
Tokenizer task_vocabulary(const std::vector<McqItem>& items);

}  // namespace hybridscope
